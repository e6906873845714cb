"""Spin-bath decoherence of a single target qubit.

A target qubit couples to ``G`` environment spins through
``H = -sigma_b (x) sum_j g_j sigma_b^(j)`` with ``b`` the pointer axis
(``z`` or ``x``). Under this coupling each environment spin picks up the
phases ``exp(+-i g_j t)`` and the target coherence is multiplied by

    z(t) = prod_j [cos(2 g_j t) + i (|alpha_j|^2 - |beta_j|^2) sin(2 g_j t)].

Two evaluation routes are kept side by side: the product formula above
(any bath size) and an exact state-vector construction on
``2**(G + 1)`` amplitudes (``G <= 20``) that serves as its oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .quantum import (
    ALG_TOL,
    SIGMA_X,
    SIGMA_Z,
    DensityOperator,
    Observable,
    StateVector,
    make_rng,
    reduced_density,
    von_neumann_entropy,
)

MAX_EXACT_BATH = 20
DEFAULT_EPSILON = 0.1
DEFAULT_WINDOW = 5.0
DEFAULT_DT = 0.01
DEFAULT_T_MAX = 10.0

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class BathTooLargeError(ValueError):
    """Exact evaluation requested for a bath beyond ``MAX_EXACT_BATH`` spins."""


class InsufficientDataError(ValueError):
    """Too few usable samples for a fit."""


def default_times(t_max: float = DEFAULT_T_MAX, dt: float = DEFAULT_DT) -> np.ndarray:
    n = int(round(t_max / dt))
    return np.linspace(0.0, n * dt, n + 1)


def pointer_observable(basis: str) -> Observable:
    if basis == "z":
        return Observable(SIGMA_Z)
    if basis == "x":
        return Observable(SIGMA_X)
    raise ValueError(f"pointer basis must be 'x' or 'z', got {basis!r}")


def pointer_states(basis: str) -> np.ndarray:
    """Columns are the +1 and -1 eigenvectors of the pointer observable."""
    if basis == "z":
        return np.eye(2, dtype=complex)
    if basis == "x":
        return _HADAMARD.copy()
    raise ValueError(f"pointer basis must be 'x' or 'z', got {basis!r}")


@dataclass(frozen=True)
class SpinBathConfig:
    """Couplings and initial amplitudes for one target and its bath.

    ``env_weights[j] = (alpha_j, beta_j)`` and ``target_amps = (a, b)`` are
    amplitudes on the +1 / -1 pointer eigenstates.
    """

    couplings: tuple[float, ...]
    env_weights: tuple[tuple[complex, complex], ...]
    target_amps: tuple[complex, complex] = (1 / np.sqrt(2), 1 / np.sqrt(2))

    def __post_init__(self):
        g = tuple(float(x) for x in self.couplings)
        w = tuple((complex(a), complex(b)) for a, b in self.env_weights)
        ta = tuple(complex(x) for x in self.target_amps)
        if not g:
            raise ValueError("bath must contain at least one spin")
        if len(w) != len(g):
            raise ValueError(f"{len(g)} couplings but {len(w)} environment weight pairs")
        for j, (a, b) in enumerate(w):
            if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > ALG_TOL:
                raise ValueError(f"environment weights for spin {j} are not normalized")
        if len(ta) != 2 or abs(abs(ta[0]) ** 2 + abs(ta[1]) ** 2 - 1) > ALG_TOL:
            raise ValueError("target amplitudes must be a normalized pair")
        object.__setattr__(self, "couplings", g)
        object.__setattr__(self, "env_weights", w)
        object.__setattr__(self, "target_amps", ta)

    @property
    def bath_size(self) -> int:
        return len(self.couplings)

    @classmethod
    def equal_weight(cls, couplings: Iterable[float], target_amps=None) -> SpinBathConfig:
        c = tuple(couplings)
        h = 1 / np.sqrt(2)
        kwargs = {} if target_amps is None else {"target_amps": tuple(target_amps)}
        return cls(c, tuple((h, h) for _ in c), **kwargs)

    @classmethod
    def random(cls, bath_size: int, rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0) -> SpinBathConfig:
        """Uniform couplings and Haar-random environment and target amplitudes."""
        g = rng.uniform(lo, hi, bath_size)

        def pair():
            v = rng.normal(size=2) + 1j * rng.normal(size=2)
            v /= np.linalg.norm(v)
            return complex(v[0]), complex(v[1])

        return cls(tuple(g), tuple(pair() for _ in range(bath_size)), pair())


@dataclass(frozen=True)
class CouplingDistribution:
    """``uniform`` draws from [lo, hi); ``fixed`` replays a given list."""

    kind: str = "uniform"
    lo: float = 0.0
    hi: float = 1.0
    values: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind == "uniform":
            if not self.lo < self.hi:
                raise ValueError(f"uniform couplings need lo < hi, got [{self.lo}, {self.hi}]")
        elif self.kind == "fixed":
            if not self.values:
                raise ValueError("fixed couplings need a non-empty value list")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        else:
            raise ValueError(f"unknown coupling distribution {self.kind!r}")

    def sample(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if self.kind == "fixed":
            if len(self.values) != n:
                raise ValueError(f"fixed distribution holds {len(self.values)} values, {n} requested")
            return np.array(self.values)
        rng = make_rng(self.seed) if rng is None else rng
        return rng.uniform(self.lo, self.hi, n)

    def with_seed(self, seed: int) -> CouplingDistribution:
        return CouplingDistribution(self.kind, self.lo, self.hi, self.values, seed)


@dataclass(frozen=True)
class DecoherenceTrace:
    times: np.ndarray
    z_values: np.ndarray
    gamma: float | None = None
    decoherence_time: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        z = np.asarray(self.z_values, dtype=complex)
        if t.ndim != 1 or t.shape != z.shape:
            raise ValueError("times and z_values must be 1-D arrays of equal length")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if t.size and t[0] == 0.0 and abs(abs(z[0]) - 1) > ALG_TOL:
            raise ValueError("|z(0)| must equal 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "z_values", z)

    @property
    def abs_z(self) -> np.ndarray:
        return np.abs(self.z_values)

    def __len__(self) -> int:
        return self.times.size


def z_factor_general(cfg: SpinBathConfig, t):
    """Decoherence factor for arbitrary environment weights; ``t`` scalar or array."""
    t_arr = np.asarray(t, dtype=float)
    g = np.asarray(cfg.couplings)
    pol = np.array([abs(a) ** 2 - abs(b) ** 2 for a, b in cfg.env_weights])
    phase = 2.0 * np.multiply.outer(t_arr, g)
    z = np.prod(np.cos(phase) + 1j * pol * np.sin(phase), axis=-1)
    return complex(z) if t_arr.ndim == 0 else z


def z_factor_equal_weight(couplings: Sequence[float], t):
    """Real decoherence factor ``prod_j cos(2 g_j t)`` for |alpha_j| = |beta_j|."""
    g = np.asarray(couplings, dtype=float)
    if g.size == 0:
        raise ValueError("couplings must be non-empty")
    t_arr = np.asarray(t, dtype=float)
    z = np.prod(np.cos(2.0 * np.multiply.outer(t_arr, g)), axis=-1)
    return float(z) if t_arr.ndim == 0 else z


def interaction_hamiltonian(couplings: Sequence[float], basis: str = "z") -> np.ndarray:
    """Dense ``-sigma_b (x) sum_j g_j sigma_b^(j)`` with the target as subsystem 0.

    Only practical for small baths; the exact route below never forms it.
    """
    s = pointer_observable(basis).matrix
    g = list(couplings)
    n = len(g) + 1
    h = np.zeros((2**n, 2**n), dtype=complex)
    for j, gj in enumerate(g):
        ops = [s] + [np.eye(2)] * len(g)
        ops[j + 1] = s
        term = ops[0]
        for op in ops[1:]:
            term = np.kron(term, op)
        h -= gj * term
    return h


def _coupling_spectrum(couplings: np.ndarray) -> np.ndarray:
    """Diagonal of ``sum_j g_j s_j`` over the bath's product eigenbasis."""
    e = np.zeros(1)
    for gj in couplings:
        e = np.add.outer(e, gj * np.array([1.0, -1.0])).ravel()
    return e


def _product_state(target, env_pairs) -> np.ndarray:
    psi = np.asarray(target, dtype=complex)
    for a, b in env_pairs:
        psi = np.kron(psi, np.array([a, b], dtype=complex))
    return psi


def entangle_step(target: StateVector, cfg: SpinBathConfig, t: float, basis: str = "z",
                  mode: str = "exact") -> tuple[StateVector | None, DensityOperator]:
    """Evolve target (x) bath for time ``t`` and reduce onto the target.

    ``target`` holds amplitudes in the computational basis; in the ``x``
    basis its pointer components are read off as ``<+|psi>``, ``<-|psi>``
    and likewise ``cfg.env_weights`` are taken on ``|+>``, ``|->``.
    The returned reduced state is in the computational basis.

    ``mode="exact"`` builds the full joint state (bath up to 20 spins);
    ``mode="analytic"`` returns ``None`` for the joint state and assembles
    the reduced state from the product formula.
    """
    if target.dims != (2,):
        raise ValueError(f"target must be a single qubit, got dims {target.dims}")
    if t < 0:
        raise ValueError("t must be non-negative")
    basis_vecs = pointer_states(basis)
    a, b = basis_vecs.conj().T @ target.amplitudes

    if mode == "analytic":
        z = z_factor_general(SpinBathConfig(cfg.couplings, cfg.env_weights, (a, b)), t)
        rho_p = np.array([[abs(a) ** 2, a * np.conj(b) * z],
                          [np.conj(a) * b * np.conj(z), abs(b) ** 2]])
        rho = basis_vecs @ rho_p @ basis_vecs.conj().T
        return None, DensityOperator((rho + rho.conj().T) / 2, (2,))
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")

    G = cfg.bath_size
    if G > MAX_EXACT_BATH:
        raise BathTooLargeError(
            f"bath of {G} spins exceeds the exact-mode cap of {MAX_EXACT_BATH}; use mode='analytic'"
        )
    # amplitudes in the pointer product basis, evolved by the diagonal propagator
    psi = _product_state((a, b), cfg.env_weights)
    spectrum = np.kron(np.array([1.0, -1.0]), _coupling_spectrum(np.asarray(cfg.couplings)))
    psi = np.exp(1j * t * spectrum) * psi
    if basis == "x":
        psi = psi.reshape([2] * (G + 1))
        for axis in range(G + 1):
            psi = np.moveaxis(np.tensordot(basis_vecs, psi, axes=([1], [axis])), 0, axis)
        psi = psi.reshape(-1)
    joint = StateVector(psi / np.linalg.norm(psi), (2,) * (G + 1))
    return joint, reduced_density(joint, [0])


def coherence(rho: DensityOperator, basis: str = "z") -> complex:
    """Off-diagonal ``<+1|rho|-1>`` in the pointer basis."""
    v = pointer_states(basis)
    return complex(v[:, 0].conj() @ rho.matrix @ v[:, 1])


def compute_trace(couplings_or_cfg, times=None) -> DecoherenceTrace:
    """Analytic trace of z(t) over ``times`` (default grid 0..10 s, step 0.01)."""
    times = default_times() if times is None else np.asarray(times, dtype=float)
    if isinstance(couplings_or_cfg, SpinBathConfig):
        z = z_factor_general(couplings_or_cfg, times)
        G = couplings_or_cfg.bath_size
    else:
        z = z_factor_equal_weight(couplings_or_cfg, times).astype(complex)
        G = len(couplings_or_cfg)
    return DecoherenceTrace(times, z, meta={"bath_size": G})


def _initial_region(trace: DecoherenceTrace, lo: float, hi: float) -> np.ndarray:
    """Mask of samples with lo < |z| < hi before |z| first drops to ``lo``."""
    az = trace.abs_z
    crossed = np.nonzero(az <= lo)[0]
    stop = crossed[0] if crossed.size else az.size
    if trace.decoherence_time is not None:
        stop = min(stop, int(np.searchsorted(trace.times, trace.decoherence_time, side="left")))
    mask = np.zeros(az.size, dtype=bool)
    mask[:stop] = True
    return mask & (az > lo) & (az < hi) & (trace.times > 0)


def fit_gaussian_decay(trace: DecoherenceTrace, lo: float = DEFAULT_EPSILON, hi: float = 0.999,
                       min_points: int = 10) -> float:
    """Least-squares rate ``Gamma`` for ``|z| ~ exp(-Gamma^2 t^2)``.

    Fits ``ln|z|`` against ``-t^2`` through the origin over the early-time
    region ``lo < |z| < hi``.
    """
    mask = _initial_region(trace, lo, hi)
    if mask.sum() < min_points:
        raise InsufficientDataError(
            f"only {int(mask.sum())} samples with {lo} < |z| < {hi}; need {min_points}"
        )
    t2 = trace.times[mask] ** 2
    y = -np.log(trace.abs_z[mask])
    gamma_sq = float(np.dot(t2, y) / np.dot(t2, t2))
    return float(np.sqrt(max(gamma_sq, 0.0)))


def gaussian_fit_residual(trace: DecoherenceTrace, gamma: float, lo: float = DEFAULT_EPSILON,
                          hi: float = 0.999) -> float:
    """RMS misfit of ``ln|z|`` against ``-gamma^2 t^2`` over the fit region."""
    mask = _initial_region(trace, lo, hi)
    if not mask.any():
        raise InsufficientDataError("empty fit region")
    r = np.log(trace.abs_z[mask]) + gamma**2 * trace.times[mask] ** 2
    return float(np.sqrt(np.mean(r**2)))


def estimate_decoherence_time(trace: DecoherenceTrace, epsilon: float = DEFAULT_EPSILON,
                              window: float = DEFAULT_WINDOW) -> float | None:
    """Earliest sampled ``T`` with ``|z(t)| < epsilon`` for every sample in ``[T, T + window]``.

    Returns ``None`` when no such ``T`` exists with ``T + window`` inside the trace.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if window <= 0:
        raise ValueError("window must be positive")
    t = trace.times
    if t.size == 0 or t[-1] - t[0] < window - 1e-9:
        raise ValueError(f"trace spans {t[-1] - t[0] if t.size else 0:g} s, shorter than window {window:g} s")
    bad = np.concatenate([[0], np.cumsum(trace.abs_z >= epsilon)])
    ends = np.searchsorted(t, t + window + 1e-9, side="right")
    feasible = t + window <= t[-1] + 1e-9
    idx = np.arange(t.size)
    ok = feasible & (bad[ends] - bad[idx] == 0)
    hits = np.nonzero(ok)[0]
    return float(t[hits[0]]) if hits.size else None


def differentiation_degree(rho: DensityOperator) -> float:
    """Normalized entropy ``S(rho) / ln N`` in [0, 1]."""
    n = rho.dim
    if n < 2:
        raise ValueError("differentiation degree needs dimension N >= 2")
    return float(min(1.0, von_neumann_entropy(rho) / np.log(n)))


def time_averaged_abs_z(trace: DecoherenceTrace, t0: float = 2.0, t1: float = 10.0) -> float:
    mask = (trace.times >= t0 - 1e-12) & (trace.times <= t1 + 1e-12)
    if not mask.any():
        raise ValueError(f"trace has no samples in [{t0}, {t1}]")
    return float(trace.abs_z[mask].mean())


def analyze_trace(trace: DecoherenceTrace, epsilon: float = DEFAULT_EPSILON,
                  window: float = DEFAULT_WINDOW) -> DecoherenceTrace:
    """Copy of ``trace`` with decoherence time and (when fittable) Gamma filled in."""
    T = estimate_decoherence_time(trace, epsilon, window)
    partial = DecoherenceTrace(trace.times, trace.z_values, None, T, dict(trace.meta))
    try:
        gamma = fit_gaussian_decay(partial, lo=epsilon)
    except InsufficientDataError:
        gamma = None
    return DecoherenceTrace(trace.times, trace.z_values, gamma, T, dict(trace.meta))


def bath_traces(bath_size: int, seeds: Iterable[int], dist: CouplingDistribution | None = None,
                times=None) -> list[DecoherenceTrace]:
    """Equal-weight traces, one per seed, couplings drawn from ``dist``."""
    dist = CouplingDistribution() if dist is None else dist
    times = default_times() if times is None else np.asarray(times, dtype=float)
    out = []
    for s in seeds:
        g = dist.with_seed(int(s)).sample(bath_size)
        tr = compute_trace(g, times)
        tr.meta["seed"] = int(s)
        out.append(tr)
    return out


def mean_decoherence_time(bath_size: int, seeds: Iterable[int], dist: CouplingDistribution | None = None,
                          epsilon: float = DEFAULT_EPSILON, window: float = DEFAULT_WINDOW,
                          times=None) -> tuple[float, int]:
    """Mean decoherence time over seeds and how many seeds produced one."""
    ts = [estimate_decoherence_time(tr, epsilon, window) for tr in bath_traces(bath_size, seeds, dist, times)]
    found = [x for x in ts if x is not None]
    if not found:
        return float("nan"), 0
    return float(np.mean(found)), len(found)
