"""Classical causal models: DAGs, d-separation, Markov checks and Bell bounds.

Ancestor and descendant sets include the node itself; parent sets never do.
Probability equalities use an absolute tolerance of 1e-10.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-10
EXAMPLE_DAG_NODES = ("A", "B", "C", "D", "E")
EXAMPLE_DAG_EDGES = (("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("C", "E"))
# (X, Y, Z) with X independent of Y given Z
EXAMPLE_DAG_INDEPENDENCIES = (
    ({"B"}, {"C", "E"}, {"A"}),
    ({"C"}, {"B"}, {"A"}),
    ({"D"}, {"A", "E"}, {"B", "C"}),
    ({"E"}, {"A", "B", "D"}, {"C"}),
)
PAIRWISE_SCAN_LIMIT = 6


class NotMarkovError(ValueError):
    pass


class ZeroProbabilityError(ValueError):
    pass


@dataclass(frozen=True)
class ClassicalDag:
    """Variables with finite cardinalities and directed edges between them."""

    cards: Mapping[str, int]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        cards = dict(self.cards)
        for name, k in cards.items():
            if int(k) < 1:
                raise ValueError(f"variable {name!r} has cardinality {k}")
        edges = tuple((str(u), str(v)) for u, v in self.edges)
        for u, v in edges:
            if u not in cards or v not in cards:
                raise ValueError(f"edge ({u}, {v}) names an unknown node")
            if u == v:
                raise ValueError(f"self-loop on {u!r}")
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "edges", edges)
        self.topological_order()

    @classmethod
    def binary(cls, nodes: Iterable[str], edges: Iterable[tuple[str, str]] = ()) -> ClassicalDag:
        return cls({n: 2 for n in nodes}, tuple(edges))

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(self.cards)

    def parents(self, v: str) -> tuple[str, ...]:
        return tuple(u for u, w in self.edges if w == v)

    def children(self, v: str) -> tuple[str, ...]:
        return tuple(w for u, w in self.edges if u == v)

    def _closure(self, start: Iterable[str], step) -> set[str]:
        seen = set(start)
        stack = list(seen)
        while stack:
            for w in step(stack.pop()):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def ancestors(self, v: str | Iterable[str]) -> set[str]:
        return self._closure([v] if isinstance(v, str) else v, self.parents)

    def descendants(self, v: str | Iterable[str]) -> set[str]:
        return self._closure([v] if isinstance(v, str) else v, self.children)

    def topological_order(self) -> list[str]:
        indeg = {v: len(self.parents(v)) for v in self.cards}
        ready = [v for v in self.cards if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for w in self.children(v):
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
        if len(order) != len(self.cards):
            raise ValueError("graph has a directed cycle")
        return order


def example_dag() -> ClassicalDag:
    return ClassicalDag.binary(EXAMPLE_DAG_NODES, EXAMPLE_DAG_EDGES)


@dataclass(frozen=True)
class JointTable:
    """Dense joint distribution; axis ``i`` belongs to ``variables[i]``."""

    variables: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        variables = tuple(self.variables)
        if p.ndim != len(variables):
            raise ValueError(f"table has {p.ndim} axes for {len(variables)} variables")
        if len(set(variables)) != len(variables):
            raise ValueError("duplicate variable names")
        if p.size and p.min() < 0:
            raise ValueError("negative probability")
        if abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "probs", p)

    @property
    def cards(self) -> dict[str, int]:
        return dict(zip(self.variables, self.probs.shape))

    def axis(self, v: str) -> int:
        try:
            return self.variables.index(v)
        except ValueError:
            raise KeyError(f"unknown variable {v!r}") from None

    def marginal(self, keep: Sequence[str]) -> np.ndarray:
        """Marginal over ``keep`` with axes in the order given."""
        keep = list(keep)
        axes = [self.axis(v) for v in keep]
        drop = tuple(i for i in range(len(self.variables)) if i not in axes)
        m = self.probs.sum(axis=drop)
        kept_sorted = sorted(axes)
        return np.transpose(m, [kept_sorted.index(a) for a in axes]) if keep else m

    def prob(self, event: Mapping[str, int]) -> float:
        """Probability of a value assignment to some variables."""
        names = list(event)
        m = self.marginal(names)
        return float(m[tuple(int(event[n]) for n in names)]) if names else float(m)

    def ci_defect(self, X: Iterable[str], Y: Iterable[str], Z: Iterable[str] = ()) -> float:
        """Largest entry of |P(xyz) P(z) - P(xz) P(yz)|."""
        X, Y, Z = list(X), list(Y), list(Z)
        pxyz = self.marginal(X + Y + Z)
        pxz = self.marginal(X + Z)
        pyz = self.marginal(Y + Z)
        pz = self.marginal(Z)
        nx, ny, nz = len(X), len(Y), len(Z)
        lhs = pxyz * pz.reshape((1,) * (nx + ny) + pz.shape)
        rhs = pxz.reshape(pxz.shape[:nx] + (1,) * ny + pxz.shape[nx:]) * pyz.reshape((1,) * nx + pyz.shape)
        return float(np.max(np.abs(lhs - rhs)))

    def independent(self, X, Y, Z=(), tol: float = PROB_TOL) -> bool:
        return self.ci_defect(X, Y, Z) <= tol


def _check_disjoint(*sets: set) -> None:
    for a, b in itertools.combinations(sets, 2):
        if a & b:
            raise ValueError(f"node sets overlap on {sorted(a & b)}")


def d_separated(dag: ClassicalDag, X: Iterable[str], Y: Iterable[str], Z: Iterable[str] = ()) -> bool:
    """True iff ``Z`` blocks every path between ``X`` and ``Y``.

    Reachability over (node, direction) pairs: a trail may pass a
    non-collider outside ``Z`` and a collider with a descendant in ``Z``.
    """
    X, Y, Z = set(X), set(Y), set(Z)
    _check_disjoint(X, Y, Z)
    for v in X | Y | Z:
        if v not in dag.cards:
            raise KeyError(f"unknown node {v!r}")
    z_anc = dag.ancestors(Z) if Z else set()
    # "up": arrived from a child (moving against an edge); "down": arrived from a parent
    frontier = [(x, "up") for x in X]
    seen = set()
    while frontier:
        v, d = frontier.pop()
        if (v, d) in seen:
            continue
        seen.add((v, d))
        if v in Y:
            return False
        if d == "up" and v not in Z:
            frontier += [(p, "up") for p in dag.parents(v)]
            frontier += [(c, "down") for c in dag.children(v)]
        elif d == "down":
            if v not in Z:
                frontier += [(c, "down") for c in dag.children(v)]
            if v in z_anc:
                frontier += [(p, "up") for p in dag.parents(v)]
    return True


def random_markov_table(dag: ClassicalDag, rng: np.random.Generator, concentration: float = 1.0) -> JointTable:
    """Table built from random conditionals along ``dag``; Markov by construction."""
    order = dag.topological_order()
    nodes = dag.nodes
    shape = tuple(dag.cards[v] for v in nodes)
    p = np.ones(shape)
    for v in order:
        pa = dag.parents(v)
        k = dag.cards[v]
        cond = rng.dirichlet(np.full(k, concentration), size=tuple(dag.cards[u] for u in pa))
        # broadcast P(v | pa) onto the full table
        src = list(pa) + [v]
        axes = [nodes.index(u) for u in src]
        order_axes = np.argsort(axes)
        c = np.transpose(cond, order_axes)
        full_shape = [1] * len(nodes)
        for a in axes:
            full_shape[a] = shape[a]
        p = p * c.reshape(full_shape)
    return JointTable(nodes, p)


def markov_factorization(dag: ClassicalDag, p: JointTable) -> np.ndarray:
    """``prod_j P(X_j | Pa(X_j))`` computed from ``p`` itself."""
    nodes = p.variables
    out = np.ones(p.probs.shape)
    for v in nodes:
        pa = list(dag.parents(v))
        joint = p.marginal(pa + [v])
        denom = joint.sum(axis=-1, keepdims=True)
        cond = np.divide(joint, denom, out=np.zeros_like(joint), where=denom > 0)
        axes = [nodes.index(u) for u in pa + [v]]
        c = np.transpose(cond, np.argsort(axes))
        full_shape = [1] * len(nodes)
        for a in axes:
            full_shape[a] = p.probs.shape[a]
        out = out * c.reshape(full_shape)
    return out


@dataclass(frozen=True)
class MarkovViolation:
    x: tuple[str, ...]
    y: tuple[str, ...]
    z: tuple[str, ...]
    defect: float


def _separation_statements(dag: ClassicalDag) -> list[tuple[tuple, tuple, tuple]]:
    """Local Markov statements, plus every singleton pair on small graphs."""
    out = []
    seen = set()

    def add(x, y, z):
        # X _||_ Y | Z and Y _||_ X | Z are one statement
        key = (frozenset((x, y)), z)
        if key not in seen:
            seen.add(key)
            out.append((x, y, z))

    for v in dag.nodes:
        pa = tuple(dag.parents(v))
        rest = tuple(u for u in dag.nodes if u not in dag.descendants(v) and u not in pa)
        if rest:
            add((v,), rest, pa)
    if len(dag.nodes) <= PAIRWISE_SCAN_LIMIT:
        for a, b in itertools.combinations(dag.nodes, 2):
            others = [u for u in dag.nodes if u not in (a, b)]
            for r in range(len(others) + 1):
                for z in itertools.combinations(others, r):
                    if d_separated(dag, {a}, {b}, set(z)):
                        add((a,), (b,), z)
    return out


def markov_check(dag: ClassicalDag, p: JointTable, tol: float = PROB_TOL) -> tuple[bool, list[MarkovViolation]]:
    """Classical Markov condition, checked two ways.

    The factorization test and the d-separation/conditional-independence
    test must agree; violations are the failing independence statements.
    """
    if set(dag.nodes) != set(p.variables):
        raise ValueError("table variables do not match DAG nodes")
    for v, k in p.cards.items():
        if dag.cards[v] != k:
            raise ValueError(f"cardinality mismatch for {v!r}: DAG {dag.cards[v]}, table {k}")
    fact_ok = float(np.max(np.abs(markov_factorization(dag, p) - p.probs))) <= tol
    violations = []
    for x, y, z in _separation_statements(dag):
        d = p.ci_defect(x, y, z)
        if d > tol:
            violations.append(MarkovViolation(x, y, z, d))
    ci_ok = not violations
    if fact_ok != ci_ok:
        raise RuntimeError("factorization and independence checks disagree")
    return fact_ok, violations


def _outcome_value(index: int) -> int:
    return 1 if index == 0 else -1


@dataclass(frozen=True)
class BellTable:
    """``probs[x, y, a, b]`` = P(a, b | x, y); outcome index 0 means +1."""

    probs: np.ndarray

    def correlator(self, x: int, y: int) -> float:
        v = np.array([_outcome_value(i) for i in range(self.probs.shape[2])])
        w = np.array([_outcome_value(i) for i in range(self.probs.shape[3])])
        return float(np.einsum("ab,a,b->", self.probs[x, y], v, w))

    def chsh(self) -> float:
        """S = E(0,0) + E(0,1) + E(1,0) - E(1,1)."""
        E = self.correlator
        return E(0, 0) + E(0, 1) + E(1, 0) - E(1, 1)

    def marginal_a(self, x: int, y: int) -> np.ndarray:
        return self.probs[x, y].sum(axis=1)

    def marginal_b(self, x: int, y: int) -> np.ndarray:
        return self.probs[x, y].sum(axis=0)


def bell_factorization(p_lambda, p_a_given, p_b_given) -> BellTable:
    """P(a, b | x, y) = sum_l P(l) P(a | x, l) P(b | y, l).

    ``p_a_given[x, l, a]`` and ``p_b_given[y, l, b]`` are conditionals.
    """
    pl = np.asarray(p_lambda, dtype=float)
    pa = np.asarray(p_a_given, dtype=float)
    pb = np.asarray(p_b_given, dtype=float)
    for name, arr in (("p_lambda", pl), ("p_a_given", pa), ("p_b_given", pb)):
        if np.any(arr < 0) or np.max(np.abs(arr.sum(axis=-1) - 1)) > 1e-12:
            raise ValueError(f"{name} is not normalized")
    return BellTable(np.einsum("l,xla,ylb->xyab", pl, pa, pb))


@dataclass(frozen=True)
class LhvStrategy:
    """Deterministic responses ``response_a[l, x]`` (outcome index) with a prior over ``l``."""

    response_a: np.ndarray
    response_b: np.ndarray
    prior: np.ndarray

    def table(self, outcomes: int = 2) -> BellTable:
        eye = np.eye(outcomes)
        pa = np.transpose(eye[np.asarray(self.response_a)], (1, 0, 2))
        pb = np.transpose(eye[np.asarray(self.response_b)], (1, 0, 2))
        return bell_factorization(self.prior, pa, pb)


def deterministic_strategies(settings: int = 2, outcomes: int = 2) -> Iterable[LhvStrategy]:
    """All product pairs of deterministic response functions (16 in the binary case)."""
    funcs = list(itertools.product(range(outcomes), repeat=settings))
    for fa, fb in itertools.product(funcs, funcs):
        yield LhvStrategy(np.array([fa]), np.array([fb]), np.array([1.0]))


def lhv_chsh_max(settings: int = 2, outcomes: int = 2) -> float:
    if settings != 2 or outcomes != 2:
        raise ValueError("CHSH needs two settings and two outcomes per party")
    best = None
    for s in deterministic_strategies(settings, outcomes):
        a, b = s.response_a[0], s.response_b[0]
        va = [_outcome_value(i) for i in a]
        vb = [_outcome_value(i) for i in b]
        val = va[0] * vb[0] + va[0] * vb[1] + va[1] * vb[0] - va[1] * vb[1]
        best = val if best is None else max(best, val)
    return float(best)


def crccp_screening_set(dag: ClassicalDag, p: JointTable, A: str, B: str,
                        tol: float = PROB_TOL) -> set[str] | None:
    """Common-cause screening set for a correlated pair without a directed path.

    Returns the common ancestors when they screen off; otherwise the first
    screening set by size then lexicographic order. ``None`` when the pair
    is uncorrelated or one is an ancestor of the other.
    """
    ok, _ = markov_check(dag, p, tol)
    if not ok:
        raise NotMarkovError("table is not Markov with respect to the DAG")
    if p.independent([A], [B], (), tol):
        return None
    if A in dag.ancestors(B) or B in dag.ancestors(A):
        return None
    common = (dag.ancestors(A) & dag.ancestors(B)) - {A, B}
    if p.independent([A], [B], sorted(common), tol):
        return common
    others = sorted(set(dag.nodes) - {A, B})
    for r in range(len(others) + 1):
        for u in itertools.combinations(others, r):
            if p.independent([A], [B], u, tol):
                return set(u)
    return None


def _cond(p: JointTable, event: Mapping[str, int], given: Mapping[str, int]) -> float:
    den = p.prob(given)
    if den <= 0:
        raise ZeroProbabilityError(f"conditioning event {dict(given)} has probability 0")
    clash = any(k in given and given[k] != v for k, v in event.items())
    return 0.0 if clash else p.prob({**given, **event}) / den


def reality_criterion_check(p: JointTable, A: Mapping[str, int], a: Mapping[str, int],
                            B: Mapping[str, int], tol: float = PROB_TOL) -> dict[str, int] | None:
    """Minimal event ``C`` certifying ``A`` and screening ``A`` from ``B`` under setting ``a``.

    Events are value assignments. The search runs over variables outside
    ``A``, ``a`` and ``B``, by size then lexicographic order, and accepts
    ``C`` when p(A | a C) = 1, p(C | a B) > 0 and
    p(A B | a C) = p(A | a C) p(B | a C).
    """
    aB = {**a, **B}
    if p.prob(aB) <= 0:
        raise ZeroProbabilityError("p(a and B) is 0")
    if _cond(p, A, aB) < 1 - tol:
        return None
    used = set(A) | set(a) | set(B)
    pool = sorted(v for v in p.variables if v not in used)
    cards = p.cards
    for r in range(1, len(pool) + 1):
        for names in itertools.combinations(pool, r):
            for values in itertools.product(*(range(cards[n]) for n in names)):
                C = dict(zip(names, values))
                aC = {**a, **C}
                if p.prob(aC) <= 0 or p.prob({**aB, **C}) <= 0:
                    continue
                pA = _cond(p, A, aC)
                if pA < 1 - tol:
                    continue
                if abs(_cond(p, {**A, **B}, aC) - pA * _cond(p, B, aC)) <= tol:
                    return C
    return None


def dag_from_dict(doc: Mapping) -> ClassicalDag:
    nodes = doc["nodes"]
    if isinstance(nodes, Mapping):
        cards = {str(k): int(v) for k, v in nodes.items()}
    else:
        cards = {str(n["name"]): int(n.get("card", 2)) for n in nodes}
    return ClassicalDag(cards, tuple(tuple(e) for e in doc.get("edges", ())))


def table_from_dict(doc: Mapping, dag: ClassicalDag) -> JointTable:
    """Flattened row-major probabilities over ``doc["variables"]`` (default: DAG node order)."""
    variables = tuple(doc.get("variables", dag.nodes))
    shape = tuple(dag.cards[v] for v in variables)
    flat = np.asarray(doc["probabilities"], dtype=float)
    if flat.size != int(np.prod(shape)):
        raise ValueError(f"expected {int(np.prod(shape))} probabilities, got {flat.size}")
    return JointTable(variables, flat.reshape(shape))
