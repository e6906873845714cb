"""Finite-dimensional state and operator kernel.

States and operators carry an ordered ``dims`` list; subsystem 0 is the
leftmost tensor factor. Everything here is an immutable value and every
stochastic function takes its generator explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Sequence

import numpy as np

ALG_TOL = 1e-12
SPEC_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


class DimensionError(ValueError):
    """Operands have incompatible shapes or subsystem structure."""


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Counter-based (Philox) generator from a 64-bit seed or a spawned sequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(seed))


def _check_dims(dims: Sequence[int], size: int) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise DimensionError(f"subsystem dimensions must be positive, got {dims}")
    if int(np.prod(dims)) != size:
        raise DimensionError(f"dims {dims} do not multiply to {size}")
    return dims


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", _check_dims(self.dims, amps.size))
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > ALG_TOL:
            raise ValueError(f"state not normalized: squared norm {norm!r}")

    @classmethod
    def from_amplitudes(cls, amplitudes, dims=None, normalize=False) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps, tuple(dims) if dims is not None else (amps.size,))

    @classmethod
    def basis(cls, index: int, dims: Sequence[int]) -> StateVector:
        amps = np.zeros(int(np.prod(dims)), dtype=complex)
        amps[index] = 1.0
        return cls(amps, tuple(dims))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> DensityOperator:
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()), self.dims)


@dataclass(frozen=True)
class DensityOperator:
    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"density matrix must be square, got shape {m.shape}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", _check_dims(self.dims, m.shape[0]))
        if np.max(np.abs(m - m.conj().T), initial=0.0) > ALG_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > ALG_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(m).min() < -ALG_TOL:
            raise ValueError("density matrix has a negative eigenvalue")

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityOperator:
        return cls(np.eye(dim, dtype=complex) / dim, (dim,))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Observable:
    """Hermitian operator with its spectral projectors cached.

    Degenerate eigenvalues (within 1e-10) share one projector.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"observable must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > ALG_TOL:
            raise ValueError("observable is not Hermitian")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
        """Distinct eigenvalues in descending order and their projectors."""
        vals, vecs = np.linalg.eigh(self.matrix)
        order = np.argsort(-vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        groups: list[list[int]] = []
        for i, v in enumerate(vals):
            if groups and abs(vals[groups[-1][0]] - v) <= SPEC_TOL:
                groups[-1].append(i)
            else:
                groups.append([i])
        eigenvalues = np.array([vals[g].mean() for g in groups])
        projectors = tuple(vecs[:, g] @ vecs[:, g].conj().T for g in groups)
        return eigenvalues, projectors

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum[0]

    @property
    def projectors(self) -> tuple[np.ndarray, ...]:
        return self.spectrum[1]


@dataclass(frozen=True)
class OutcomeSample:
    eigenvalue: float
    index: int
    probability: float


def spin_observable(theta: float) -> Observable:
    """Spin along angle ``theta`` in the x-z plane (theta=0 is sigma_z)."""
    return Observable(np.cos(theta) * SIGMA_Z + np.sin(theta) * SIGMA_X)


def _kron_all(mats):
    return reduce(np.kron, mats)


def tensor_product(a, b):
    """Kronecker product of two states of the same kind; dims concatenate."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes), a.dims + b.dims)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(np.kron(a.matrix, b.matrix), a.dims + b.dims)
    raise TypeError(
        f"tensor_product needs two operands of the same kind, got "
        f"{type(a).__name__} and {type(b).__name__}"
    )


def is_unitary(u: np.ndarray, tol: float = SPEC_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def apply_unitary(state: StateVector, u, targets: Sequence[int]) -> StateVector:
    """Apply ``u`` to the listed subsystems (in the order given)."""
    u = np.asarray(u, dtype=complex)
    targets = [int(t) for t in targets]
    n = len(state.dims)
    if not targets or len(set(targets)) != len(targets):
        raise DimensionError(f"invalid target list {targets}")
    if any(t < 0 or t >= n for t in targets):
        raise IndexError(f"target index out of range for {n} subsystems: {targets}")
    sub = int(np.prod([state.dims[t] for t in targets]))
    if u.shape != (sub, sub):
        raise DimensionError(f"unitary shape {u.shape} does not match target dimension {sub}")
    if not is_unitary(u):
        raise ValueError("matrix is not unitary within 1e-10")

    psi = state.amplitudes.reshape(state.dims)
    rest = [i for i in range(n) if i not in targets]
    psi = np.transpose(psi, targets + rest).reshape(sub, -1)
    psi = u @ psi
    psi = psi.reshape([state.dims[t] for t in targets] + [state.dims[r] for r in rest])
    psi = np.transpose(psi, np.argsort(targets + rest))
    return StateVector(psi.reshape(-1), state.dims)


def _validate_keep(keep: Sequence[int], n: int) -> list[int]:
    keep = sorted(int(k) for k in keep)
    if not keep:
        raise ValueError("keep set must be non-empty")
    if len(set(keep)) != len(keep) or keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"invalid subsystem indices {keep} for {n} subsystems")
    return keep


def partial_trace(rho: DensityOperator, keep: Sequence[int]) -> DensityOperator:
    """Trace out every subsystem not in ``keep``."""
    dims = rho.dims
    n = len(dims)
    keep = _validate_keep(keep, n)
    drop = [i for i in range(n) if i not in keep]
    t = rho.matrix.reshape(dims + dims)
    # contract each dropped bra index with its ket index
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise DimensionError("too many subsystems for partial_trace")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for d in drop:
        col[d] = row[d]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    kd = tuple(dims[k] for k in keep)
    size = int(np.prod(kd))
    m = reduced.reshape(size, size)
    return DensityOperator((m + m.conj().T) / 2, kd)


def reduced_density(state: StateVector, keep: Sequence[int]) -> DensityOperator:
    """Reduced state of a pure state without forming the full density matrix."""
    n = len(state.dims)
    keep = _validate_keep(keep, n)
    drop = [i for i in range(n) if i not in keep]
    kd = [state.dims[k] for k in keep]
    psi = np.transpose(state.amplitudes.reshape(state.dims), keep + drop)
    psi = psi.reshape(int(np.prod(kd)), -1)
    m = psi @ psi.conj().T
    return DensityOperator((m + m.conj().T) / 2, tuple(kd))


def von_neumann_entropy(rho: DensityOperator) -> float:
    """Entropy in nats; eigenvalues at or below 1e-12 contribute nothing."""
    lam = np.linalg.eigvalsh(rho.matrix)
    lam = lam[lam > ALG_TOL]
    return float(max(0.0, -np.sum(lam * np.log(lam))))


def _as_density(rho) -> DensityOperator:
    return rho.density() if isinstance(rho, StateVector) else rho


def born_probabilities(rho, obs: Observable) -> list[tuple[float, float]]:
    """(eigenvalue, probability) pairs, eigenvalues in descending order."""
    rho = _as_density(rho)
    if rho.dim != obs.dim:
        raise DimensionError(f"state dimension {rho.dim} != observable dimension {obs.dim}")
    probs = np.array([np.trace(p @ rho.matrix).real for p in obs.projectors])
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    return [(float(v), float(p)) for v, p in zip(obs.eigenvalues, probs)]


def sample_outcome(rho, obs: Observable, rng: np.random.Generator) -> OutcomeSample:
    table = born_probabilities(rho, obs)
    probs = np.array([p for _, p in table])
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    idx = min(idx, len(table) - 1)
    while probs[idx] == 0.0:  # only reachable through round-off at the top edge
        idx -= 1
    value, p = table[idx]
    return OutcomeSample(eigenvalue=value, index=idx, probability=p)


def commutator_defect(h, obs) -> float:
    """Spectral norm of ``[h, obs]``."""
    h = np.asarray(h, dtype=complex)
    o = obs.matrix if isinstance(obs, Observable) else np.asarray(obs, dtype=complex)
    if h.shape != o.shape:
        raise DimensionError(f"shapes differ: {h.shape} vs {o.shape}")
    return float(np.linalg.norm(h @ o - o @ h, ord=2))


def embed_operator(op: np.ndarray, target: int, dims: Sequence[int]) -> np.ndarray:
    """Place a single-subsystem operator at ``target`` with identities elsewhere."""
    mats = [op if i == target else np.eye(d, dtype=complex) for i, d in enumerate(dims)]
    return _kron_all(mats)


def fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2 for pure states."""
    if a.dims != b.dims:
        raise DimensionError(f"dims differ: {a.dims} vs {b.dims}")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def random_state(dims: Sequence[int], rng: np.random.Generator) -> StateVector:
    d = int(np.prod(dims))
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return StateVector(v / np.linalg.norm(v), tuple(dims))


def random_density(dims: Sequence[int], rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Ginibre-ensemble mixed state."""
    d = int(np.prod(dims))
    k = rank or d
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityOperator((m + m.conj().T) / 2, tuple(dims))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph
