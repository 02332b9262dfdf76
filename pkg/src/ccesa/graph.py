"""Assignment graphs, their evolution under dropouts, and the reliability and
privacy predicates stated in terms of informative nodes.

Clients are numbered ``1..n``. A graph is an immutable value; induced
subgraphs keep the original labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np

Edge = tuple[int, int]


def _norm(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    vertices: frozenset[int]
    edges: frozenset[Edge]
    _adj: Mapping[int, frozenset[int]] = field(
        default=None, init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        adj: dict[int, set[int]] = {v: set() for v in self.vertices}
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at {i}")
            if i > j:
                raise ValueError("edges must be stored as (min, max)")
            if i not in adj or j not in adj:
                raise ValueError(f"edge {(i, j)} leaves the vertex set")
            adj[i].add(j)
            adj[j].add(i)
        object.__setattr__(self, "_adj", {v: frozenset(s) for v, s in adj.items()})

    @classmethod
    def from_edges(cls, vertices: Iterable[int], edges: Iterable[tuple[int, int]]) -> "Graph":
        return cls(frozenset(vertices), frozenset(_norm(i, j) for i, j in edges))

    def adj(self, i: int) -> frozenset[int]:
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    @property
    def order(self) -> int:
        return len(self.vertices)

    def has_edge(self, i: int, j: int) -> bool:
        return _norm(i, j) in self.edges


class AssignmentGraph(Graph):
    """The secret-sharing topology over clients ``1..n``."""

    @classmethod
    def build(cls, n: int, edges: Iterable[tuple[int, int]]) -> "AssignmentGraph":
        if n < 0:
            raise ValueError("n must be nonnegative")
        return cls(frozenset(range(1, n + 1)), frozenset(_norm(i, j) for i, j in edges))

    @property
    def n(self) -> int:
        return len(self.vertices)

    # -- edge-list text format: "n" header, then one "i j" pair per line --

    def to_edgelist(self) -> str:
        lines = [str(self.n)] + [f"{i} {j}" for i, j in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str) -> "AssignmentGraph":
        rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        rows = [r for r in rows if r]
        if not rows:
            raise ValueError("empty edge list")
        n = int(rows[0])
        edges = []
        for r in rows[1:]:
            a, b = r.split()
            edges.append((int(a), int(b)))
        return cls.build(n, edges)


def gen_complete(n: int) -> AssignmentGraph:
    return AssignmentGraph.build(n, combinations(range(1, n + 1), 2))


def gen_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> AssignmentGraph:
    """Each of the ``C(n, 2)`` edges present independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return AssignmentGraph.build(n, zip((iu[keep] + 1).tolist(), (ju[keep] + 1).tolist()))


def induced_subgraph(g: Graph, vertices: Iterable[int]) -> Graph:
    vs = frozenset(vertices)
    if not vs <= g.vertices:
        raise ValueError(f"vertices {sorted(vs - g.vertices)} not in graph")
    edges = frozenset(e for e in g.edges if e[0] in vs and e[1] in vs)
    return Graph(vs, edges)


@dataclass(frozen=True)
class ComponentDecomposition:
    components: tuple[frozenset[int], ...]

    @property
    def count(self) -> int:
        return len(self.components)

    def component_of(self, v: int) -> frozenset[int]:
        for c in self.components:
            if v in c:
                return c
        raise KeyError(v)


def connected_components(g: Graph) -> ComponentDecomposition:
    seen: set[int] = set()
    comps = []
    for root in sorted(g.vertices):
        if root in seen:
            continue
        comp = {root}
        stack = [root]
        while stack:
            u = stack.pop()
            for w in g.adj(u):
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        comps.append(frozenset(comp))
    return ComponentDecomposition(tuple(comps))


def is_connected(g: Graph) -> bool:
    # empty and single-vertex graphs count as connected
    return connected_components(g).count <= 1


# ---------------------------------------------------------------------------
# Graph evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphEvolution:
    """Base graph plus nested survivor sets ``V0 ⊇ V1 ⊇ V2 ⊇ V3 ⊇ V4``."""

    base: AssignmentGraph
    survivors: tuple[frozenset[int], ...]
    _memo: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if len(self.survivors) != 5:
            raise ValueError("need exactly five survivor sets V0..V4")
        if self.survivors[0] != self.base.vertices:
            raise ValueError("V0 must be the full vertex set")
        for a, b in zip(self.survivors, self.survivors[1:]):
            if not b <= a:
                raise ValueError("survivor sets must be nested")

    @classmethod
    def from_levels(cls, base: AssignmentGraph, levels: Mapping[int, int]) -> "GraphEvolution":
        """``levels[v] = k`` means ``v`` belongs to ``V0..Vk`` and no later set."""
        sets = tuple(
            frozenset(v for v in base.vertices if levels.get(v, 4) >= k) for k in range(5)
        )
        return cls(base, sets)

    @classmethod
    def no_dropouts(cls, base: AssignmentGraph) -> "GraphEvolution":
        return cls(base, (base.vertices,) * 5)

    def V(self, k: int) -> frozenset[int]:
        return self.survivors[k]

    def G(self, k: int) -> Graph:
        return induced_subgraph(self.base, self.survivors[k])

    def components(self, k: int) -> ComponentDecomposition:
        key = ("components", k)
        if key not in self._memo:
            self._memo[key] = connected_components(self.G(k))
        return self._memo[key]

    def level(self, v: int) -> int:
        return max(k for k in range(5) if v in self.survivors[k])

    def surviving_holders(self, i: int) -> int:
        """``|(Adj(i) ∪ {i}) ∩ V4|``: holders of ``i``'s shares that answer in step 3."""
        key = ("holders", i)
        if key not in self._memo:
            self._memo[key] = len((self.base.adj(i) | {i}) & self.survivors[4])
        return self._memo[key]

    def v3_plus(self) -> frozenset[int]:
        return self.closure(self.survivors[3])

    def closure(self, comp: Iterable[int]) -> frozenset[int]:
        """``C ∪ {i ∈ V2 : Adj(i) ∩ C ≠ ∅}``."""
        c = frozenset(comp)
        key = ("closure", c)
        if key not in self._memo:
            adj = self.base.adj
            self._memo[key] = c | frozenset(i for i in self.survivors[2] if adj(i) & c)
        return self._memo[key]


Threshold = int | Mapping[int, int]


def _t_of(t: Threshold, i: int) -> int:
    return t if isinstance(t, int) else t[i]


def is_informative(i: int, evolution: GraphEvolution, t: Threshold) -> bool:
    """At least ``t_i`` holders of client ``i``'s shares (itself included) reach ``V4``."""
    if i not in evolution.base.vertices:
        raise ValueError(f"{i} is not a client")
    return evolution.surviving_holders(i) >= _t_of(t, i)


def non_informative(nodes: Iterable[int], evolution: GraphEvolution, t: Threshold) -> list[int]:
    return sorted(i for i in nodes if not is_informative(i, evolution, t))


def reliability_predicate(evolution: GraphEvolution, t: Threshold) -> bool:
    """True iff every node of ``V3+`` is informative."""
    return all(is_informative(i, evolution, t) for i in evolution.v3_plus())


def privacy_predicate(evolution: GraphEvolution, t: Threshold) -> bool:
    """``G3`` connected, or every component's closure holds a non-informative node."""
    decomposition = evolution.components(3)
    if decomposition.count <= 1:
        return True
    return all(
        any(not is_informative(i, evolution, t) for i in evolution.closure(comp))
        for comp in decomposition.components
    )
