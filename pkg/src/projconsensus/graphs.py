"""Directed neighbor graphs and neighbor-graph schedules.

Arcs are pairs ``(j, i)`` meaning agent ``j`` is a neighbor of agent ``i``:
information flows from ``j`` to ``i``. Internally a graph is a boolean
matrix ``adj`` with ``adj[i, j]`` set when ``(j, i)`` is an arc, so row ``i``
lists the in-neighbors of ``i`` and matches row ``i`` of its flocking matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation, InsufficientLength, ShapeError


class Digraph:
    __slots__ = ("adj", "_flocking")

    def __init__(self, adj):
        adj = np.array(adj, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ShapeError(f"adjacency must be square, got {adj.shape}")
        adj.setflags(write=False)
        self.adj = adj
        self._flocking = None

    @classmethod
    def from_arcs(cls, m: int, arcs: Iterable[Sequence[int]], self_arcs: bool = True) -> "Digraph":
        adj = np.eye(m, dtype=bool) if self_arcs else np.zeros((m, m), dtype=bool)
        for j, i in arcs:
            if not (0 <= i < m and 0 <= j < m):
                raise ContractViolation(f"arc {(j, i)} outside 0..{m - 1}")
            adj[i, j] = True
        return cls(adj)

    @classmethod
    def self_loops(cls, m: int) -> "Digraph":
        return cls(np.eye(m, dtype=bool))

    @classmethod
    def complete(cls, m: int) -> "Digraph":
        return cls(np.ones((m, m), dtype=bool))

    @classmethod
    def ring(cls, m: int, order: Sequence[int] | None = None) -> "Digraph":
        """Directed ring ``order[0] -> order[1] -> ... -> order[0]`` with self-arcs."""
        order = list(range(m)) if order is None else list(order)
        return cls.from_arcs(m, [(order[k], order[(k + 1) % m]) for k in range(m)])

    @property
    def m(self) -> int:
        return self.adj.shape[0]

    @property
    def arcs(self) -> set[tuple[int, int]]:
        i, j = np.nonzero(self.adj)
        return {(int(a), int(b)) for b, a in zip(i, j)}

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adj[i])]

    def has_self_arcs(self) -> bool:
        return bool(np.diag(self.adj).all())

    def issubgraph(self, other: "Digraph") -> bool:
        """True when every arc of ``self`` is an arc of ``other``."""
        return bool((~self.adj | other.adj).all())

    def __eq__(self, other) -> bool:
        return isinstance(other, Digraph) and np.array_equal(self.adj, other.adj)

    def __hash__(self) -> int:
        return hash(self.adj.tobytes())

    def __repr__(self) -> str:
        return f"Digraph(m={self.m}, arcs={sorted(self.arcs)})"


def compose(G_q: Digraph, G_p: Digraph) -> Digraph:
    """``G_q o G_p``: arc ``j -> i`` iff ``j -> k`` in ``G_p`` and ``k -> i`` in ``G_q``."""
    if G_q.m != G_p.m:
        raise ShapeError(f"vertex counts differ: {G_q.m} vs {G_p.m}")
    prod = G_q.adj.astype(np.int64) @ G_p.adj.astype(np.int64)
    return Digraph(prod > 0)


def compose_all(seq: Sequence[Digraph]) -> Digraph:
    """Compose a time-ordered sequence: ``seq[-1] o ... o seq[0]``."""
    if not seq:
        raise ContractViolation("cannot compose an empty sequence")
    out = seq[0]
    for G in seq[1:]:
        out = compose(G, out)
    return out


def reachability(G: Digraph) -> np.ndarray:
    """``R[u, v]`` is True when ``v`` is reachable from ``u`` (``u == v`` included)."""
    fwd = G.adj.T | np.eye(G.m, dtype=bool)
    R = fwd.copy()
    while True:
        nxt = (R.astype(np.int64) @ fwd.astype(np.int64)) > 0
        if np.array_equal(nxt, R):
            return R
        R = nxt


def is_strongly_connected(G: Digraph) -> bool:
    return bool(reachability(G).all())


def is_repeatedly_jointly_strongly_connected(seq: Sequence[Digraph], l: int, tau0: int = 1) -> bool:
    """Check every complete window of ``l`` graphs starting at ``tau0`` (1-based).

    Window ``k`` covers graphs ``(k-1)l + tau0`` through ``kl + tau0 - 1``.
    """
    if l < 1 or tau0 < 1:
        raise ContractViolation("l and tau0 must be positive")
    if len(seq) < tau0 + l - 1:
        raise InsufficientLength(
            f"need at least {tau0 + l - 1} graphs for one window, got {len(seq)}"
        )
    start = tau0 - 1
    while start + l <= len(seq):
        if not is_strongly_connected(compose_all(seq[start:start + l])):
            return False
        start += l
    return True


def mutually_reachable_classes(G: Digraph) -> list[frozenset[int]]:
    """Equivalence classes of two-way reachability, ordered by smallest member."""
    R = reachability(G)
    mutual = R & R.T
    seen: set[int] = set()
    classes = []
    for v in range(G.m):
        if v in seen:
            continue
        cls = frozenset(int(u) for u in np.flatnonzero(mutual[v]))
        seen |= cls
        classes.append(cls)
    return classes


def essential_vertices(G: Digraph) -> frozenset[int]:
    """Vertices reachable from every vertex they can reach."""
    R = reachability(G)
    # i essential iff R[i, v] implies R[v, i]
    return frozenset(i for i in range(G.m) if not (R[i] & ~R[:, i]).any())


def flocking_matrix(G: Digraph) -> np.ndarray:
    """Row-stochastic matrix averaging each agent over its in-neighbors."""
    if G._flocking is None:
        if not G.has_self_arcs():
            raise ContractViolation("flocking matrix requires self-arcs at every vertex")
        A = G.adj.astype(float)
        F = A / A.sum(axis=1, keepdims=True)
        F.setflags(write=False)
        G._flocking = F
    return G._flocking


def support_graph(M, tol: float = 0.0) -> Digraph:
    """The graph whose arcs are the nonzero entries of a square matrix."""
    return Digraph(np.abs(np.asarray(M)) > tol)


@dataclass(frozen=True)
class GraphSchedule:
    """A deterministic generator of the neighbor-graph sequence ``N(1), N(2), ...``.

    kind
        ``"fixed"`` repeats ``graph``; ``"periodic"`` cycles through ``period``;
        ``"seeded-random"`` draws graphs from ``(seed, t)`` with a directed
        ring planted at a seeded slot of every window of ``l`` steps.
    """

    kind: str
    m: int
    graph: Digraph | None = None
    period: tuple[Digraph, ...] = ()
    seed: int = 0
    l: int = 1
    density: float = 0.2
    horizon: int | None = None
    _windows: list = field(default_factory=list, init=False, repr=False, compare=False)
    _rng: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "fixed":
            if self.graph is None or self.graph.m != self.m:
                raise ContractViolation("fixed schedule needs a graph on m vertices")
            if not self.graph.has_self_arcs():
                raise ContractViolation("neighbor graphs must have self-arcs")
        elif self.kind == "periodic":
            if not self.period:
                raise ContractViolation("periodic schedule needs a nonempty period")
            for G in self.period:
                if G.m != self.m or not G.has_self_arcs():
                    raise ContractViolation("period graphs must be self-arc graphs on m vertices")
        elif self.kind == "seeded-random":
            if self.l < 1:
                raise ContractViolation("window length l must be positive")
            if not 0.0 <= self.density <= 1.0:
                raise ContractViolation("density must lie in [0, 1]")
            object.__setattr__(self, "_rng", np.random.default_rng(self.seed))
        else:
            raise ContractViolation(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def fixed(cls, graph: Digraph, horizon: int | None = None) -> "GraphSchedule":
        return cls("fixed", graph.m, graph=graph, horizon=horizon)

    @classmethod
    def periodic(cls, graphs: Sequence[Digraph], horizon: int | None = None) -> "GraphSchedule":
        graphs = tuple(graphs)
        return cls("periodic", graphs[0].m, period=graphs, horizon=horizon)

    @classmethod
    def seeded_random(cls, m: int, seed: int, l: int, density: float = 0.2,
                      horizon: int | None = None) -> "GraphSchedule":
        return cls("seeded-random", m, seed=seed, l=l, density=density, horizon=horizon)

    def at(self, t: int) -> Digraph:
        """The neighbor graph ``N(t)`` for ``t >= 1``."""
        if t < 1:
            raise ContractViolation(f"schedule times start at 1, got {t}")
        if self.horizon is not None and t > self.horizon:
            raise ContractViolation(f"t = {t} is beyond the schedule horizon {self.horizon}")
        if self.kind == "fixed":
            return self.graph
        if self.kind == "periodic":
            return self.period[(t - 1) % len(self.period)]
        window, slot = divmod(t - 1, self.l)
        while len(self._windows) <= window:
            self._windows.append(self._next_window())
        return self._windows[window][slot]

    def graphs(self, count: int, start: int = 1) -> list[Digraph]:
        return [self.at(t) for t in range(start, start + count)]

    def _next_window(self) -> tuple[Digraph, ...]:
        # windows are drawn in order from one stream, so N(t) depends only on (seed, t)
        rng = self._rng
        m, l = self.m, self.l
        planted = int(rng.integers(l))
        order = rng.permutation(m)
        adj = rng.random((l, m, m)) < self.density
        adj[:, np.arange(m), np.arange(m)] = True
        adj[planted, order[(np.arange(m) + 1) % m], order] = True
        flock = adj / adj.sum(axis=2, keepdims=True)
        flock.setflags(write=False)
        graphs = []
        for a, F in zip(adj, flock):
            G = Digraph(a)
            G._flocking = F
            graphs.append(G)
        return tuple(graphs)
