"""Layered determination chains: construction, rule checks and simulation.

Layer ``i`` holds ``n_N * G**(N - i)`` two-level systems, numbered from 1
and grouped in contiguous runs of ``G``. Group ``k`` of layer ``i`` is the
environment of system ``k`` in layer ``i + 1``. Step ``i`` couples layer
``i`` to layer ``i + 1`` through the ``sigma_z`` interaction for even ``i``
and the ``sigma_x`` interaction for odd ``i``; every step lasts ``delta``
seconds and its events are stamped at ``(i + 1) * delta``.

Layer-0 populations reach 10^5 and beyond, so a step is evaluated with the
product formula per group rather than with explicit ``2**G`` states.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .decoherence import (
    DEFAULT_EPSILON,
    DEFAULT_WINDOW,
    CouplingDistribution,
    compute_trace,
    default_times,
    estimate_decoherence_time,
    fit_gaussian_decay,
    InsufficientDataError,
)
from .quantum import make_rng

DEFAULT_NODE_CAP = 10**7
CALIBRATION_SEEDS = 32
EVENT_CSV_HEADER = ("step", "time_s", "layer", "target_id", "env_group",
                    "target_value", "env_value", "x", "y", "z")


class GraphTooLargeError(ValueError):
    pass


def step_basis(step: int) -> str:
    return "z" if step % 2 == 0 else "x"


@dataclass(frozen=True)
class ChainConfig:
    num_layers: int
    last_layer_count: int
    group_size: int
    coupling_dist: CouplingDistribution = field(default_factory=CouplingDistribution)
    step_duration: float | str = "auto"
    seed: int = 0
    dissolve_after_layer: int | None = None
    target_amps: tuple[complex, complex] = (1 / np.sqrt(2), 1 / np.sqrt(2))
    epsilon: float = DEFAULT_EPSILON
    window: float = DEFAULT_WINDOW
    trace_groups: int = 32
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self):
        for name, lo in (("num_layers", 2), ("last_layer_count", 1), ("group_size", 1), ("trace_groups", 1)):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < lo:
                raise ValueError(f"{name} must be an integer >= {lo}, got {v!r}")
        if isinstance(self.step_duration, str):
            if self.step_duration != "auto":
                raise ValueError(f"step_duration must be a positive number or 'auto', got {self.step_duration!r}")
        elif not self.step_duration > 0:
            raise ValueError(f"step_duration must be positive, got {self.step_duration!r}")
        k = self.dissolve_after_layer
        if k is not None and not 0 <= k < self.last_layer_index:
            raise ValueError(f"dissolve_after_layer must lie in [0, {self.last_layer_index - 1}], got {k}")
        a, b = (complex(x) for x in self.target_amps)
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-12:
            raise ValueError("target_amps must be normalized")
        object.__setattr__(self, "target_amps", (a, b))

    @property
    def last_layer_index(self) -> int:
        """``N``: index of the final layer."""
        return self.num_layers - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coupling_dist"] = {k: v for k, v in asdict(self.coupling_dist).items()}
        d["coupling_dist"]["values"] = list(self.coupling_dist.values)
        d["target_amps"] = [[z.real, z.imag] for z in self.target_amps]
        return d


def layer_size(cfg: ChainConfig, layer: int) -> int:
    """Systems in ``layer``: ``n_N * G**(N - layer)``."""
    N = cfg.last_layer_index
    if not 0 <= layer <= N:
        raise IndexError(f"layer {layer} outside [0, {N}]")
    return cfg.last_layer_count * cfg.group_size ** (N - layer)


def count_events(cfg: ChainConfig) -> int:
    """Systems acquiring a determinate value across the whole chain."""
    return sum(layer_size(cfg, i) for i in range(cfg.num_layers))


def count_edges(cfg: ChainConfig) -> int:
    """Pairwise interactions (graph edges): every system outside the last layer."""
    return sum(layer_size(cfg, i) for i in range(cfg.last_layer_index))


def count_group_interactions(cfg: ChainConfig) -> int:
    """One interaction per (environment group, target) pair."""
    return sum(layer_size(cfg, i) for i in range(1, cfg.num_layers))


def event_counts(cfg: ChainConfig) -> dict[str, int]:
    return {
        "systems": count_events(cfg),
        "edges": count_edges(cfg),
        "group_interactions": count_group_interactions(cfg),
    }


@dataclass(frozen=True)
class LayerSpec:
    count: int
    group_size: int
    basis: str


@dataclass(frozen=True)
class SystemNode:
    layer: int
    index: int
    group: int
    is_initiator: bool
    position: tuple[float, float, float]
    has_dc_for: int | None = None


@dataclass
class SdcGraph:
    """Nodes are stored columnwise; global node ids run layer by layer.

    ``edges[e] = (environment id, target id)``.
    """

    layers: list[LayerSpec]
    node_layer: np.ndarray
    node_index: np.ndarray
    node_group: np.ndarray
    initiator: np.ndarray
    edges: np.ndarray

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_nodes(self) -> int:
        return int(self.node_layer.size)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def layer_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([l.count for l in self.layers])])

    def node_id(self, layer: int, index: int) -> int:
        return int(self.layer_offsets[layer] + index - 1)

    def positions(self) -> np.ndarray:
        return np.column_stack([self.node_index, self.node_layer, np.zeros(self.num_nodes)]).astype(float)

    def node(self, node_id: int) -> SystemNode:
        i, j = int(self.node_layer[node_id]), int(self.node_index[node_id])
        child = None
        if i + 1 < self.num_layers:
            child = self.node_id(i + 1, int(self.node_group[node_id]))
        return SystemNode(i, j, int(self.node_group[node_id]), bool(self.initiator[node_id]),
                          (float(j), float(i), 0.0), child)

    def nodes(self) -> Iterator[SystemNode]:
        for n in range(self.num_nodes):
            yield self.node(n)


def build_graph(cfg: ChainConfig) -> SdcGraph:
    total = count_events(cfg)
    if total > cfg.node_cap:
        raise GraphTooLargeError(f"chain needs {total} nodes, above the cap of {cfg.node_cap}")
    N, G = cfg.last_layer_index, cfg.group_size
    layers = [LayerSpec(layer_size(cfg, i), G, step_basis(i)) for i in range(N + 1)]
    counts = [l.count for l in layers]
    node_layer = np.repeat(np.arange(N + 1), counts)
    node_index = np.concatenate([np.arange(1, c + 1) for c in counts])
    node_group = (node_index - 1) // G + 1
    node_group[node_layer == N] = 1
    initiator = node_layer == 0
    offsets = np.concatenate([[0], np.cumsum(counts)])
    src = np.arange(offsets[N])
    tgt_layer = node_layer[src] + 1
    tgt = offsets[tgt_layer] + node_group[src] - 1
    edges = np.column_stack([src, tgt]).astype(np.int64)
    return SdcGraph(layers, node_layer, node_index, node_group, initiator, edges)


@dataclass(frozen=True)
class Violation:
    rule: str
    node: int | None
    detail: str


def validate_cdc(graph: SdcGraph) -> list[Violation]:
    """Structural rule check; an empty list means the graph is admissible.

    CDC3: exactly the layer-0 systems are initiators.
    CDC4: every later system's parents are one complete group of the
    previous layer.
    CDC1: edges run from layer ``i`` to ``i + 1`` only.
    basis: pointer basis alternates z, x, z, ... by layer.
    """
    out: list[Violation] = []
    layer = graph.node_layer
    for n in np.nonzero(graph.initiator != (layer == 0))[0]:
        what = "initiator outside layer 0" if graph.initiator[n] else "layer-0 system is not an initiator"
        out.append(Violation("CDC3", int(n), f"{what} (layer {int(layer[n])}, index {int(graph.node_index[n])})"))

    for i, spec in enumerate(graph.layers):
        if spec.basis != step_basis(i):
            out.append(Violation("basis", None, f"layer {i} uses {spec.basis}, expected {step_basis(i)}"))

    src, tgt = graph.edges[:, 0], graph.edges[:, 1]
    bad = layer[tgt] != layer[src] + 1
    for e in np.nonzero(bad)[0]:
        out.append(Violation("CDC1", int(tgt[e]),
                             f"edge {int(src[e])}->{int(tgt[e])} joins layer {int(layer[src[e]])} "
                             f"to layer {int(layer[tgt[e]])}"))
    good = ~bad
    src, tgt = src[good], tgt[good]

    # key each (layer, group) pair to compare parent sets against whole groups
    n_groups = int(graph.node_group.max()) + 1 if graph.num_nodes else 1
    group_key = layer * n_groups + graph.node_group
    group_sizes = np.bincount(group_key, minlength=int(group_key.max()) + 1)
    n_parents = np.bincount(tgt, minlength=graph.num_nodes)
    key_min = np.full(graph.num_nodes, np.iinfo(np.int64).max)
    key_max = np.full(graph.num_nodes, -1)
    np.minimum.at(key_min, tgt, group_key[src])
    np.maximum.at(key_max, tgt, group_key[src])
    for n in np.nonzero(layer > 0)[0]:
        where = f"layer {int(layer[n])}, index {int(graph.node_index[n])}"
        if n_parents[n] == 0:
            out.append(Violation("CDC4", int(n), f"system ({where}) has no parents"))
        elif key_min[n] != key_max[n]:
            out.append(Violation("CDC4", int(n), f"parents of ({where}) span several groups"))
        elif n_parents[n] != group_sizes[key_min[n]]:
            out.append(Violation("CDC4", int(n),
                                 f"({where}) has {int(n_parents[n])} parents, its group has "
                                 f"{int(group_sizes[key_min[n]])} members"))
    return out


@dataclass(frozen=True)
class Event:
    time: float
    edge: tuple[int, int]
    target_value: float
    env_value: float
    position: tuple[float, float, float]


@dataclass
class EventLog:
    """Columnar event record, one row per edge, both relata at one spacetime point."""

    step: np.ndarray
    time: np.ndarray
    layer: np.ndarray
    target_id: np.ndarray
    env_group: np.ndarray
    env_node: np.ndarray
    target_node: np.ndarray
    target_value: np.ndarray
    env_value: np.ndarray
    position: np.ndarray

    @classmethod
    def empty(cls) -> EventLog:
        i = np.zeros(0, dtype=np.int64)
        f = np.zeros(0)
        return cls(i, f, i, i, i, i, i, f, f, np.zeros((0, 3)))

    @classmethod
    def concat(cls, logs: list[EventLog]) -> EventLog:
        if not logs:
            return cls.empty()
        return cls(*(np.concatenate([getattr(l, f) for l in logs]) for f in cls.__dataclass_fields__))

    def __len__(self) -> int:
        return int(self.step.size)

    def __iter__(self) -> Iterator[Event]:
        for r in range(len(self)):
            yield Event(float(self.time[r]), (int(self.env_node[r]), int(self.target_node[r])),
                        float(self.target_value[r]), float(self.env_value[r]),
                        tuple(float(x) for x in self.position[r]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EVENT_CSV_HEADER)
            times = [f"{t:.12g}" for t in self.time]
            for r in range(len(self)):
                x, y, z = self.position[r]
                w.writerow((int(self.step[r]), times[r], int(self.layer[r]), int(self.target_id[r]),
                            int(self.env_group[r]), f"{self.target_value[r]:.12g}",
                            f"{self.env_value[r]:.12g}", f"{x:.12g}", f"{y:.12g}", f"{z:.12g}"))


@dataclass(frozen=True)
class StepSummary:
    step: int
    basis: str
    time: float
    n_targets: int
    mean_abs_z: float
    mean_differentiation: float
    plus_fraction: float
    decoherence_time: float | None
    gamma: float | None


@dataclass
class ChainRun:
    config: ChainConfig
    delta: float
    graph: SdcGraph
    events: EventLog
    steps: list[StepSummary]

    @property
    def step_decoherence_times(self) -> list[float | None]:
        return [s.decoherence_time for s in self.steps]


def calibrate_delta(cfg: ChainConfig, n_seeds: int = CALIBRATION_SEEDS) -> float:
    """Mean decoherence time over a seeded batch of baths of size ``G``."""
    seeds = np.random.SeedSequence(cfg.seed, spawn_key=(1 << 32,)).generate_state(n_seeds, dtype=np.uint64)
    times = default_times()
    found = []
    for s in seeds:
        g = cfg.coupling_dist.with_seed(int(s)).sample(cfg.group_size)
        T = estimate_decoherence_time(compute_trace(g, times), cfg.epsilon, cfg.window)
        if T is not None:
            found.append(T)
    if not found:
        raise RuntimeError(
            f"no calibration bath of size {cfg.group_size} decohered; set step_duration explicitly"
        )
    return float(np.mean(found))


def _binary_entropy_degree(abs_a2: np.ndarray, coh: np.ndarray) -> np.ndarray:
    """S(rho)/ln 2 for qubit states with populations (p, 1-p) and coherence |c|."""
    disc = np.sqrt(np.maximum((abs_a2 - 0.5) ** 2 + coh**2, 0.0))
    lam = np.stack([0.5 + disc, 0.5 - disc])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(lam > 1e-12, -lam * np.log(lam), 0.0)
    return np.clip(terms.sum(axis=0) / np.log(2), 0.0, 1.0)


def _simulate_step(cfg: ChainConfig, graph: SdcGraph, step: int, delta: float,
                   rng: np.random.Generator) -> tuple[EventLog, StepSummary]:
    G = cfg.group_size
    basis = step_basis(step)
    n_t = graph.layers[step + 1].count
    offsets = graph.layer_offsets
    # rounded so that e.g. 3 * 0.6 is stamped 1.8, not 1.7999999999999998
    t_event = round((step + 1) * delta, 12)

    if cfg.coupling_dist.kind == "fixed":
        g = np.tile(cfg.coupling_dist.sample(G), n_t).reshape(n_t, G)
    else:
        g = cfg.coupling_dist.sample(n_t * G, rng).reshape(n_t, G)
    # environment spins enter as pointer eigenstates of the previous basis,
    # i.e. equal-weight in this one, so z(t) = prod cos(2 g t)
    z = np.prod(np.cos(2.0 * g * delta), axis=1)
    a, b = cfg.target_amps
    p_plus = abs(a) ** 2
    coh = np.abs(a * np.conj(b) * z)

    target_plus = rng.random(n_t) < p_plus
    env_plus = rng.random(n_t * G) < 0.5

    env_nodes = offsets[step] + np.arange(n_t * G)
    tgt_local = np.repeat(np.arange(1, n_t + 1), G)
    tgt_nodes = offsets[step + 1] + tgt_local - 1
    pos = np.column_stack([tgt_local, np.full(n_t * G, step + 1), np.zeros(n_t * G)]).astype(float)
    log = EventLog(
        step=np.full(n_t * G, step, dtype=np.int64),
        time=np.full(n_t * G, t_event),
        layer=np.full(n_t * G, step + 1, dtype=np.int64),
        target_id=tgt_local.astype(np.int64),
        env_group=tgt_local.astype(np.int64),
        env_node=env_nodes.astype(np.int64),
        target_node=tgt_nodes.astype(np.int64),
        target_value=np.repeat(np.where(target_plus, 1.0, -1.0), G),
        env_value=np.where(env_plus, 1.0, -1.0),
        position=pos,
    )

    times = default_times()
    dts, gammas = [], []
    for row in g[: cfg.trace_groups]:
        tr = compute_trace(row, times)
        T = estimate_decoherence_time(tr, cfg.epsilon, cfg.window)
        if T is not None:
            dts.append(T)
        try:
            gammas.append(fit_gaussian_decay(tr, lo=cfg.epsilon))
        except InsufficientDataError:
            pass
    summary = StepSummary(
        step=step, basis=basis, time=t_event, n_targets=n_t,
        mean_abs_z=float(np.mean(np.abs(z))),
        mean_differentiation=float(np.mean(_binary_entropy_degree(np.full(n_t, p_plus), coh))),
        plus_fraction=float(target_plus.mean()),
        decoherence_time=float(np.mean(dts)) if dts else None,
        gamma=float(np.mean(gammas)) if gammas else None,
    )
    return log, summary


def simulate_chain(cfg: ChainConfig) -> ChainRun:
    """Run every step in layer order; deterministic for a given config and seed.

    Each step draws from its own stream spawned off ``cfg.seed``, so a
    dissolved run is an exact prefix of the undissolved one.
    """
    graph = build_graph(cfg)
    delta = calibrate_delta(cfg) if cfg.step_duration == "auto" else float(cfg.step_duration)
    N = cfg.last_layer_index
    last_step = N - 1 if cfg.dissolve_after_layer is None else cfg.dissolve_after_layer
    root = np.random.SeedSequence(cfg.seed)
    streams = root.spawn(N)
    logs, summaries = [], []
    for step in range(last_step + 1):
        log, summary = _simulate_step(cfg, graph, step, delta, make_rng(streams[step]))
        logs.append(log)
        summaries.append(summary)
    return ChainRun(cfg, delta, graph, EventLog.concat(logs), summaries)


def dissolve_at(cfg: ChainConfig, k: int) -> EventLog:
    """Event log of the chain cut after step ``k`` (interaction layer ``k`` -> ``k + 1``)."""
    if not 0 <= k < cfg.last_layer_index:
        raise ValueError(f"dissolution layer must lie in [0, {cfg.last_layer_index - 1}], got {k}")
    d = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    d["dissolve_after_layer"] = k
    return simulate_chain(ChainConfig(**d)).events


@dataclass(frozen=True)
class OrderingReport:
    passed: bool
    factor: float
    ratios: tuple[float, ...]
    failures: tuple[int, ...]


def timescale_ordering_check(measured, factor: float = 10.0) -> OrderingReport:
    """Each downstream step must be no more than ``factor`` times faster than the one before."""
    m = [float(x) for x in measured]
    if len(m) < 2:
        raise ValueError("need decoherence times for at least two steps")
    ratios = tuple(m[i + 1] / m[i] if m[i] > 0 else float("inf") for i in range(len(m) - 1))
    failures = tuple(i + 1 for i in range(len(m) - 1) if m[i + 1] < m[i] / factor)
    return OrderingReport(not failures, factor, ratios, failures)


SYSTEM_CSV_HEADER = ("node_id", "layer", "index", "group", "time_s", "value")


def system_records(run: ChainRun) -> dict[str, np.ndarray]:
    """One row per system that acquired a value: its first determination.

    Layer-0 systems are fixed as environments of step 0; a system in layer
    ``i >= 1`` is fixed as a target of step ``i - 1``.
    """
    ev = run.events
    g = run.graph
    G = run.config.group_size
    first = ev.step == 0
    ids = [ev.env_node[first]]
    times = [ev.time[first]]
    values = [ev.env_value[first]]
    # every target appears once per environment member; keep the first
    tgt = np.arange(0, len(ev), G)
    ids.append(ev.target_node[tgt])
    times.append(ev.time[tgt])
    values.append(ev.target_value[tgt])
    node = np.concatenate(ids)
    order = np.argsort(node, kind="stable")
    node = node[order]
    return {
        "node_id": node,
        "layer": g.node_layer[node],
        "index": g.node_index[node],
        "group": g.node_group[node],
        "time_s": np.concatenate(times)[order],
        "value": np.concatenate(values)[order],
    }
