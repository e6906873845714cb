"""Quantum causal models in Choi form.

Every node ``X`` owns an input space ``X.in`` and one or more output
subsystems ``X.out.k``. Causal mechanisms are channels from parent output
subsystems into a child's input; interventions are instruments from a
node's input to its output.

Conventions
-----------
* ``ChannelCJ.matrix`` is the unnormalized Choi operator
  ``sum_ij E(|i><j|) (x) |i><j|`` on output (x) input; the identity channel
  on ``d`` levels has trace ``d``.
* ``InstrumentElement.matrix`` holds the transpose of the element's Choi
  operator. With that choice the outcome probability is the plain trace
  ``Tr[sigma (tau_1 (x) ... (x) tau_n)]``; for a measure-and-discard
  instrument the stored matrix is just the POVM effect.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .quantum import (
    SPEC_TOL,
    DimensionError,
    StateVector,
    apply_unitary,
    fidelity,
    is_unitary,
    spin_observable,
)

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SINGLET = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
# a = 0, a' = pi/2, b = -3pi/4, b' = 3pi/4 gives S = +2 sqrt(2) for the singlet
TSIRELSON_ANGLES = (0.0, np.pi / 2, -3 * np.pi / 4, 3 * np.pi / 4)
DENSE_LIMIT = 4096


class QMCViolation(ValueError):
    """Two causal-mechanism factors fail to commute."""


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    name: str
    input_dim: int
    output_dim: int
    parents: tuple[str, ...] = ()
    output_split: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"node {self.name!r}: dimensions must be >= 1")
        object.__setattr__(self, "parents", tuple(self.parents))
        split = (self.output_dim,) if self.output_split is None else tuple(int(d) for d in self.output_split)
        if int(np.prod(split)) != self.output_dim:
            raise ValueError(f"node {self.name!r}: output split {split} does not multiply to {self.output_dim}")
        object.__setattr__(self, "output_split", split)

    @property
    def in_space(self) -> str:
        return f"{self.name}.in"

    @property
    def out_spaces(self) -> tuple[str, ...]:
        if len(self.output_split) == 1:
            return (f"{self.name}.out",)
        return tuple(f"{self.name}.out.{k}" for k in range(len(self.output_split)))


def _node_spaces(nodes: Sequence[NodeSpec]) -> dict[str, int]:
    spaces: dict[str, int] = {}
    for n in nodes:
        spaces[n.in_space] = n.input_dim
        for label, d in zip(n.out_spaces, n.output_split):
            spaces[label] = d
    return spaces


def _partial_trace_first(m: np.ndarray, d_out: int, d_in: int) -> np.ndarray:
    """Trace out the output factor of an operator on output (x) input."""
    return np.einsum("aiaj->ij", m.reshape(d_out, d_in, d_out, d_in))


@dataclass(frozen=True)
class ChannelCJ:
    """Choi operator of a CPTP map plus its placement in a causal model.

    ``node`` is the child whose input the map feeds; ``parent_spaces`` lists
    the parent output subsystems it reads, in tensor order. Both stay unset
    for a free-standing channel.
    """

    matrix: np.ndarray
    out_dim: int
    in_dim: int
    node: str | None = None
    parent_spaces: tuple[str, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.out_dim * self.in_dim,) * 2:
            raise DimensionError(f"Choi matrix shape {m.shape} != ({self.out_dim}*{self.in_dim})^2")
        if np.max(np.abs(m - m.conj().T)) > SPEC_TOL or np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -SPEC_TOL:
            raise ValueError("Choi matrix is not positive semidefinite: map is not completely positive")
        if np.max(np.abs(_partial_trace_first(m, self.out_dim, self.in_dim) - np.eye(self.in_dim))) > SPEC_TOL:
            raise ValueError("map is not trace preserving")
        object.__setattr__(self, "parent_spaces", tuple(self.parent_spaces))
        object.__setattr__(self, "matrix", m)

    def wired(self, node: str, parent_spaces: Sequence[str] = ()) -> ChannelCJ:
        return ChannelCJ(self.matrix, self.out_dim, self.in_dim, node, tuple(parent_spaces))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Channel action ``Tr_in[J (I (x) rho^T)]``."""
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.in_dim, self.in_dim):
            raise DimensionError(f"input has shape {rho.shape}, channel expects dimension {self.in_dim}")
        j = self.matrix.reshape(self.out_dim, self.in_dim, self.out_dim, self.in_dim)
        return np.einsum("aibj,ij->ab", j, rho)


def choi_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    m = 0
    for k in kraus:
        # vec(K) in row-major order over (out, in) is (K (x) I)|Phi>
        v = k.reshape(-1)
        m = m + np.outer(v, v.conj())
    return m


def choi_of_channel(kraus: Sequence[np.ndarray] | None = None, unitary: np.ndarray | None = None) -> ChannelCJ:
    """Choi operator from a Kraus list or a unitary (exactly one of them)."""
    if (kraus is None) == (unitary is None):
        raise ValueError("give exactly one of kraus or unitary")
    if unitary is not None:
        u = np.asarray(unitary, dtype=complex)
        if not is_unitary(u):
            raise ValueError("matrix is not unitary within 1e-10")
        kraus = [u]
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    shapes = {k.shape for k in kraus}
    if len(shapes) != 1:
        raise DimensionError(f"Kraus operators have differing shapes {shapes}")
    d_out, d_in = kraus[0].shape
    return ChannelCJ(choi_from_kraus(kraus), d_out, d_in)


def identity_channel(d: int) -> ChannelCJ:
    return choi_of_channel(unitary=np.eye(d))


def depolarizing_channel(d: int, p: float = 1.0) -> ChannelCJ:
    """``rho -> (1 - p) rho + p Tr(rho) I / d``."""
    m = (1 - p) * choi_from_kraus([np.eye(d)]) + p * np.eye(d * d) / d
    return ChannelCJ(m, d, d)


def state_preparation(rho: np.ndarray) -> ChannelCJ:
    """A state viewed as a channel from the trivial system."""
    rho = np.asarray(rho, dtype=complex)
    return ChannelCJ(rho, rho.shape[0], 1)


def compose(second: ChannelCJ, first: ChannelCJ) -> ChannelCJ:
    """Choi operator of ``second o first`` via the link product."""
    if first.out_dim != second.in_dim:
        raise DimensionError("output of first channel does not match input of second")
    a, b, c = first.in_dim, first.out_dim, second.out_dim
    j1 = first.matrix.reshape(b, a, b, a)
    j2 = second.matrix.reshape(c, b, c, b)
    m = np.einsum("cbex,baxy->caey", j2, j1)
    return ChannelCJ(m.reshape(c * a, c * a), c, a)


@dataclass(frozen=True)
class InstrumentElement:
    node: str
    setting: object
    outcome: object
    matrix: np.ndarray
    sdc_flag: bool = True

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))


def check_instrument(elements: Sequence[InstrumentElement], node: NodeSpec) -> None:
    """Sum of elements must be trace preserving (Choi partial trace = identity)."""
    total = sum(e.matrix for e in elements)
    d_in, d_out = node.input_dim, node.output_dim
    if total.shape != (d_in * d_out,) * 2:
        raise DimensionError(f"instrument at {node.name!r} has shape {total.shape}, expected ({d_out}*{d_in})^2")
    choi = total.T
    if np.max(np.abs(_partial_trace_first(choi, d_out, d_in) - np.eye(d_in))) > SPEC_TOL:
        raise NormalizationError(f"instrument at {node.name!r} (setting {elements[0].setting!r}) is not trace preserving")


def measurement_instrument(node: str, effects: Mapping[object, np.ndarray], setting: object = None,
                           sdc_flag: bool = True) -> list[InstrumentElement]:
    """Measure-and-discard instrument from POVM effects."""
    return [InstrumentElement(node, setting, k, e, sdc_flag) for k, e in effects.items()]


def spin_measurement(node: str, theta: float, sdc_flag: bool = True) -> list[InstrumentElement]:
    """Projective spin measurement along ``theta`` in the x-z plane, outcomes +1 / -1."""
    obs = spin_observable(theta)
    effects = {int(round(v)): p for v, p in zip(obs.eigenvalues, obs.projectors)}
    return measurement_instrument(node, effects, setting=theta, sdc_flag=sdc_flag)


def channel_instrument(node: str, channel: ChannelCJ, setting: object = None, outcome: object = None,
                       sdc_flag: bool = False) -> list[InstrumentElement]:
    """Single-outcome instrument applying ``channel``; no outcome variable is produced."""
    return [InstrumentElement(node, setting, outcome, channel.matrix.T, sdc_flag)]


def identity_instrument(node: NodeSpec) -> list[InstrumentElement]:
    if node.input_dim != node.output_dim:
        raise DimensionError(f"identity instrument needs equal input/output dims at {node.name!r}")
    return channel_instrument(node.name, identity_channel(node.input_dim))


@dataclass
class ProcessOperator:
    """Product of commuting, embedded mechanism factors over all node spaces.

    The dense matrix is materialized only on request (``matrix``) because
    scenarios with a dozen spaces outgrow memory quickly; probabilities are
    computed by contracting the factors directly.
    """

    nodes: list[NodeSpec]
    spaces: dict[str, int]
    factors: list[tuple[np.ndarray, tuple[str, ...]]]

    @property
    def dim(self) -> int:
        return int(np.prod(list(self.spaces.values())))

    def embed(self, op: np.ndarray, support: Sequence[str], order: Sequence[str] | None = None) -> np.ndarray:
        order = list(self.spaces) if order is None else list(order)
        dims = [self.spaces[s] for s in order]
        rest = [s for s in order if s not in support]
        full = np.kron(op, np.eye(int(np.prod([self.spaces[s] for s in rest])) if rest else 1))
        cur = list(support) + rest
        perm = [cur.index(s) for s in order]
        n = len(order)
        t = full.reshape([self.spaces[s] for s in cur] * 2)
        t = t.transpose(perm + [p + n for p in perm])
        d = int(np.prod(dims))
        return t.reshape(d, d)

    @property
    def matrix(self) -> np.ndarray:
        if self.dim > DENSE_LIMIT:
            raise MemoryError(f"process operator of dimension {self.dim} exceeds dense limit {DENSE_LIMIT}")
        out = np.eye(self.dim, dtype=complex)
        for op, support in self.factors:
            out = out @ self.embed(op, support)
        return out


def assemble_process(nodes: Sequence[NodeSpec], channels: Sequence[ChannelCJ]) -> ProcessOperator:
    """Build the process operator, rejecting wiring errors and non-commuting factors."""
    nodes = list(nodes)
    by_name = {n.name: n for n in nodes}
    if len(by_name) != len(nodes):
        raise ValueError("duplicate node names")
    for n in nodes:
        for p in n.parents:
            if p not in by_name:
                raise ValueError(f"node {n.name!r} names unknown parent {p!r}")
    _check_acyclic(nodes)
    spaces = _node_spaces(nodes)
    owner = {s: n.name for n in nodes for s in n.out_spaces}

    chans = {}
    for c in channels:
        if c.node is None:
            raise ValueError("channel is not wired to a node")
        if c.node in chans:
            raise ValueError(f"two channels given for node {c.node!r}")
        chans[c.node] = c
    factors = []
    for n in nodes:
        if n.name not in chans:
            raise ValueError(f"no channel given for node {n.name!r}")
        c = chans[n.name]
        if c.out_dim != n.input_dim:
            raise DimensionError(f"channel into {n.name!r} outputs dimension {c.out_dim}, node input is {n.input_dim}")
        for s in c.parent_spaces:
            if s not in owner:
                raise ValueError(f"channel into {n.name!r} reads unknown space {s!r}")
            if owner[s] not in n.parents:
                raise ValueError(f"channel into {n.name!r} reads {s!r}, which does not belong to a parent")
        if set(n.parents) - {owner[s] for s in c.parent_spaces}:
            raise ValueError(f"channel into {n.name!r} ignores some declared parents")
        d_par = int(np.prod([spaces[s] for s in c.parent_spaces])) if c.parent_spaces else 1
        if d_par != c.in_dim:
            raise DimensionError(f"channel into {n.name!r} expects input {c.in_dim}, parents provide {d_par}")
        factors.append((c.matrix, (n.in_space,) + c.parent_spaces, n.name))

    for (a, sa, na), (b, sb, nb) in itertools.combinations(factors, 2):
        if not set(sa) & set(sb):
            continue
        union = list(dict.fromkeys(sa + sb))
        tmp = ProcessOperator(nodes, {s: spaces[s] for s in union}, [])
        ea, eb = tmp.embed(a, sa, union), tmp.embed(b, sb, union)
        defect = np.linalg.norm(ea @ eb - eb @ ea, ord=2)
        if defect >= SPEC_TOL:
            raise QMCViolation(f"mechanisms for {na!r} and {nb!r} do not commute (defect {defect:.3g})")
    return ProcessOperator(nodes, spaces, [(m, s) for m, s, _ in factors])


def _check_acyclic(nodes: Sequence[NodeSpec]) -> None:
    parents = {n.name: set(n.parents) for n in nodes}
    done: set[str] = set()
    while len(done) < len(parents):
        ready = [k for k, ps in parents.items() if k not in done and ps <= done]
        if not ready:
            raise ValueError("node parent graph has a cycle")
        done.update(ready)


def _contract(sigma: ProcessOperator, taus: Sequence[tuple[np.ndarray, tuple[str, ...]]]) -> complex:
    """``Tr[sigma (x) taus]`` as a tensor-network contraction."""
    labels = list(sigma.spaces)
    counter = itertools.count()
    current = {s: next(counter) for s in labels}
    head = dict(current)
    operands: list = []
    for op, support in sigma.factors:
        rows = [current[s] for s in support]
        cols = []
        for s in support:
            current[s] = next(counter)
            cols.append(current[s])
        operands += [op.reshape([sigma.spaces[s] for s in support] * 2), rows + cols]
    for op, support in taus:
        rows = [current[s] for s in support]
        cols = [head[s] for s in support]
        operands += [op.reshape([sigma.spaces[s] for s in support] * 2), rows + cols]
    if next(counter) > 52:
        raise DimensionError("too many spaces to contract")
    return complex(np.einsum(*operands, [], optimize="greedy"))


def joint_probabilities(sigma: ProcessOperator, instruments: Mapping[str, Sequence[InstrumentElement]],
                        check: bool = True) -> dict[tuple, float]:
    """Generalized Born rule over one instrument (setting) per node.

    Keys are outcome tuples in node order; single-outcome instruments
    contribute their (possibly ``None``) outcome label.
    """
    names = [n.name for n in sigma.nodes]
    missing = set(names) - set(instruments)
    if missing:
        raise ValueError(f"no instrument for nodes {sorted(missing)}")
    for n in sigma.nodes:
        els = instruments[n.name]
        d = n.input_dim * n.output_dim
        for e in els:
            if e.matrix.shape != (d, d):
                raise DimensionError(f"instrument at {n.name!r} has shape {e.matrix.shape}, expected ({d}, {d})")
        if check:
            check_instrument(els, n)

    table = {}
    for combo in itertools.product(*(instruments[n] for n in names)):
        taus = [(e.matrix, tuple(node.out_spaces) + (node.in_space,)) for e, node in zip(combo, sigma.nodes)]
        p = _contract(sigma, taus).real
        table[tuple(e.outcome for e in combo)] = p if p > 0 else 0.0
    total = sum(table.values())
    if abs(total - 1) > 1e-9:
        raise NormalizationError(f"probabilities sum to {total!r}")
    return table


def marginal(table: Mapping[tuple, float], keep: Sequence[int]) -> dict[tuple, float]:
    out: dict[tuple, float] = {}
    for k, p in table.items():
        key = tuple(k[i] for i in keep)
        out[key] = out.get(key, 0.0) + p
    return out


def bell_model(rho_lambda: np.ndarray | None = None) -> ProcessOperator:
    """Common source Lambda feeding A and B through identity channels."""
    rho = np.outer(SINGLET, SINGLET.conj()) if rho_lambda is None else np.asarray(rho_lambda, dtype=complex)
    nodes = [
        NodeSpec("L", 4, 4, (), (2, 2)),
        NodeSpec("A", 2, 1, ("L",)),
        NodeSpec("B", 2, 1, ("L",)),
    ]
    channels = [
        state_preparation(rho).wired("L"),
        identity_channel(2).wired("A", ("L.out.0",)),
        identity_channel(2).wired("B", ("L.out.1",)),
    ]
    return assemble_process(nodes, channels)


def bell_scenario(angle_a: float, angle_b: float, rho_lambda: np.ndarray | None = None) -> dict[tuple[int, int], float]:
    """P(x, y | s, t) for spin measurements along ``angle_a`` and ``angle_b``."""
    sigma = bell_model(rho_lambda)
    inst = {
        "L": identity_instrument(sigma.nodes[0]),
        "A": spin_measurement("A", angle_a),
        "B": spin_measurement("B", angle_b),
    }
    full = joint_probabilities(sigma, inst)
    return {(k[1], k[2]): p for k, p in full.items()}


def correlator(table: Mapping[tuple[int, int], float]) -> float:
    return float(sum(x * y * p for (x, y), p in table.items()))


def chsh_value(a: float, a2: float, b: float, b2: float, rho_lambda: np.ndarray | None = None) -> float:
    """S = E(a,b) + E(a,b') + E(a',b) - E(a',b')."""
    E = lambda s, t: correlator(bell_scenario(s, t, rho_lambda))  # noqa: E731
    return E(a, b) + E(a, b2) + E(a2, b) - E(a2, b2)


def wigner_effects(theta: float) -> dict[int, np.ndarray]:
    """Wigner's measurement on (target, memory): undo the CNOT, then spin along ``theta``."""
    obs = spin_observable(theta)
    return {
        int(round(v)): CNOT @ np.kron(p, np.eye(2)) @ CNOT
        for v, p in zip(obs.eigenvalues, obs.projectors)
    }


@dataclass
class EwfResult:
    isolated: bool
    wigner_table: dict[tuple[int, int], float]
    full_table: dict[tuple, float]
    friend_table: dict[tuple[int, int], float] | None
    reversal_fidelity: float
    meta: dict = field(default_factory=dict)


def ewf_model(rho_lambda: np.ndarray | None = None) -> ProcessOperator:
    """Source, two friend memories, two friends, two Wigners."""
    rho = np.outer(SINGLET, SINGLET.conj()) if rho_lambda is None else rho_lambda
    zero = np.diag([1.0, 0.0]).astype(complex)
    nodes = [
        NodeSpec("L", 4, 4, (), (2, 2)),
        NodeSpec("M1", 2, 2),
        NodeSpec("M2", 2, 2),
        NodeSpec("F1", 4, 4, ("L", "M1")),
        NodeSpec("F2", 4, 4, ("L", "M2")),
        NodeSpec("W1", 4, 1, ("F1",)),
        NodeSpec("W2", 4, 1, ("F2",)),
    ]
    channels = [
        state_preparation(rho).wired("L"),
        state_preparation(zero).wired("M1"),
        state_preparation(zero).wired("M2"),
        identity_channel(4).wired("F1", ("L.out.0", "M1.out")),
        identity_channel(4).wired("F2", ("L.out.1", "M2.out")),
        identity_channel(4).wired("W1", ("F1.out",)),
        identity_channel(4).wired("W2", ("F2.out",)),
    ]
    return assemble_process(nodes, channels)


def friend_channel() -> ChannelCJ:
    """Friend's interaction with the target: CNOT from target onto memory."""
    return choi_of_channel(unitary=CNOT)


def friend_instrument(node: str, isolated: bool) -> list[InstrumentElement]:
    if isolated:
        return channel_instrument(node, friend_channel(), sdc_flag=False)
    elements = []
    for value, proj in ((1, np.diag([1.0, 0.0])), (-1, np.diag([0.0, 1.0]))):
        k = CNOT @ np.kron(proj, np.eye(2))
        elements.append(InstrumentElement(node, "z", value, choi_from_kraus([k]).T, sdc_flag=True))
    return elements


def reversal_fidelity(rho_lambda_state: np.ndarray | None = None) -> float:
    """Friend interactions on both wings followed by their inverses, on the full 4-qubit state."""
    pair = SINGLET if rho_lambda_state is None else np.asarray(rho_lambda_state, dtype=complex)
    # subsystems: target 1, target 2, memory 1, memory 2
    psi0 = StateVector(np.kron(pair, np.array([1, 0, 0, 0], dtype=complex)), (2, 2, 2, 2))
    psi = apply_unitary(psi0, CNOT, [0, 2])
    psi = apply_unitary(psi, CNOT, [1, 3])
    psi = apply_unitary(psi, CNOT.conj().T, [1, 3])
    psi = apply_unitary(psi, CNOT.conj().T, [0, 2])
    return fidelity(psi0, psi)


def ewf_scenario(isolated: bool, wigner_settings: tuple[float, float] = (0.0, 0.0),
                 rho_lambda: np.ndarray | None = None) -> EwfResult:
    """Extended Wigner's friend with two wings.

    Isolated friends act as unitary channels and produce no outcomes, so
    only the Wigners' table exists. Otherwise each friend is a z-measuring
    instrument and the table carries outcomes ``(c, d, a, b)``.
    """
    sigma = ewf_model(rho_lambda)
    nodes = {n.name: n for n in sigma.nodes}
    inst = {
        "L": identity_instrument(nodes["L"]),
        "M1": identity_instrument(nodes["M1"]),
        "M2": identity_instrument(nodes["M2"]),
        "F1": friend_instrument("F1", isolated),
        "F2": friend_instrument("F2", isolated),
        "W1": measurement_instrument("W1", wigner_effects(wigner_settings[0]), wigner_settings[0]),
        "W2": measurement_instrument("W2", wigner_effects(wigner_settings[1]), wigner_settings[1]),
    }
    full = joint_probabilities(sigma, inst)
    # outcome tuple order: L, M1, M2, F1, F2, W1, W2
    wigner = marginal(full, [5, 6])
    friends = None if isolated else marginal(full, [3, 4])
    if not isolated:
        full = {(k[3], k[4], k[5], k[6]): p for k, p in full.items()}
    else:
        full = dict(wigner)
    return EwfResult(isolated, wigner, full, friends, reversal_fidelity(),
                     meta={"settings": tuple(wigner_settings)})


_CHANNEL_KINDS = {
    "identity": lambda p: identity_channel(int(p["dim"])),
    "depolarizing": lambda p: depolarizing_channel(int(p["dim"]), float(p.get("p", 1.0))),
    "cnot": lambda p: choi_of_channel(unitary=CNOT),
}


def _named_state(spec) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "singlet":
            return np.outer(SINGLET, SINGLET.conj())
        if spec.startswith("basis:"):
            _, idx, dim = spec.split(":")
            v = np.zeros(int(dim), dtype=complex)
            v[int(idx)] = 1
            return np.outer(v, v)
        raise ValueError(f"unknown state name {spec!r}")
    m = np.asarray(spec, dtype=float if np.ndim(spec) == 2 else complex)
    if m.ndim == 1:  # diagonal probabilities
        return np.diag(m).astype(complex)
    return m.astype(complex)


def scenario_from_dict(doc: Mapping) -> tuple[ProcessOperator, dict[str, list[InstrumentElement]]]:
    """Build a process and instruments from a JSON-style description.

    ``nodes``: ``{name, input_dim, output_dim, parents?, output_split?}``.
    ``channels``: ``{node, kind, params?, parents?}`` with kind ``state``
    (``params.state`` is ``"singlet"``, ``"basis:i:d"``, a diagonal or a
    matrix), ``identity``, ``depolarizing`` or ``cnot``.
    ``instruments``: ``{node: {"kind": "spin", "angle": a}}``,
    ``{"kind": "identity"}`` or ``{"kind": "cnot"}``.
    """
    nodes = [NodeSpec(n["name"], int(n["input_dim"]), int(n["output_dim"]), tuple(n.get("parents", ())),
                      tuple(n["output_split"]) if n.get("output_split") else None) for n in doc["nodes"]]
    by_name = {n.name: n for n in nodes}
    channels = []
    for c in doc["channels"]:
        kind, params = c["kind"], c.get("params", {})
        if kind == "state":
            ch = state_preparation(_named_state(params["state"]))
        elif kind in _CHANNEL_KINDS:
            ch = _CHANNEL_KINDS[kind](params)
        else:
            raise ValueError(f"unknown channel kind {kind!r}")
        channels.append(ch.wired(c["node"], tuple(c.get("parents", ()))))
    sigma = assemble_process(nodes, channels)
    instruments = {}
    for name, spec in doc.get("instruments", {}).items():
        kind = spec.get("kind", "spin")
        if kind == "spin":
            instruments[name] = spin_measurement(name, float(spec["angle"]))
        elif kind == "identity":
            instruments[name] = identity_instrument(by_name[name])
        elif kind == "cnot":
            instruments[name] = channel_instrument(name, friend_channel())
        else:
            raise ValueError(f"unknown instrument kind {kind!r}")
    return sigma, instruments
