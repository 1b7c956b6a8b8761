"""Conflict-graph container and random topology generators.

Vertices are wireless links; an edge marks a pair of links that interfere
and must never transmit in the same slot.  Four topology families are
supported: stars (centralized bottleneck), Erdos-Renyi, Barabasi-Albert
preferential attachment, and power-law trees (hierarchical backhaul).

All generators draw from an explicit ``numpy.random.Generator`` seeded from
the family's seed; nothing reads global random state, so a
``TopologyFamily`` maps to exactly one graph.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

__all__ = [
    "ConflictGraph",
    "TopologyFamily",
    "star_family",
    "erdos_renyi_family",
    "barabasi_albert_family",
    "power_law_tree_family",
    "generate",
    "is_independent_set",
    "degree_stats",
    "to_edge_list",
    "from_edge_list",
    "save_graph",
    "load_graph",
]

FAMILY_KINDS = ("star", "er", "ba", "tree")


@dataclass(frozen=True)
class ConflictGraph:
    """Undirected simple graph over vertices 0..n-1.

    ``adj`` is a symmetric boolean matrix with a zero diagonal and
    ``neighbors[v]`` is the sorted array of vertices adjacent to ``v``.
    Instances are treated as immutable values; the backing arrays are
    marked read-only so they can be shared freely.
    """

    n: int
    adj: np.ndarray
    neighbors: tuple[np.ndarray, ...]

    @staticmethod
    def from_edges(n: int, edges: Iterable[tuple[int, int]]) -> "ConflictGraph":
        if n < 1:
            raise ValueError("n: vertex count must be >= 1")
        adj = np.zeros((n, n), dtype=bool)
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a},{b}) out of range for n={n}")
            if a == b:
                raise ValueError(f"self-loop at vertex {a}")
            adj[a, b] = True
            adj[b, a] = True
        return ConflictGraph.from_adjacency(adj)

    @staticmethod
    def from_adjacency(adj: np.ndarray) -> "ConflictGraph":
        adj = np.asarray(adj, dtype=bool)
        n = adj.shape[0]
        if adj.shape != (n, n) or n < 1:
            raise ValueError("adjacency must be a square matrix with n >= 1")
        if adj.diagonal().any():
            raise ValueError("adjacency has a self-loop")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency is not symmetric")
        neighbors = tuple(np.flatnonzero(adj[v]) for v in range(n))
        adj = adj.copy()
        adj.setflags(write=False)
        for nb in neighbors:
            nb.setflags(write=False)
        return ConflictGraph(n=n, adj=adj, neighbors=neighbors)

    @property
    def num_edges(self) -> int:
        return int(self.adj.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        """Edge list with a < b, sorted lexicographically."""
        a, b = np.nonzero(np.triu(self.adj, k=1))
        return list(zip(a.tolist(), b.tolist()))

    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1).astype(np.int64)


@dataclass(frozen=True)
class TopologyFamily:
    """A parameterized random-topology family plus its reproducibility seed.

    kind: "star" (n_leaves), "er" (n, p), "ba" (n, m), "tree" (n, gamma).
    """

    kind: str
    n: int = 0            # total vertices (er/ba/tree)
    n_leaves: int = 0     # star only
    p: float = 0.1        # er only
    m: int = 1            # ba only
    gamma: float = 3.0    # tree only
    seed: int = 0

    def with_seed(self, seed: int) -> "TopologyFamily":
        return replace(self, seed=int(seed))

    def label(self) -> str:
        if self.kind == "star":
            return f"star{self.n_leaves}"
        if self.kind == "er":
            return f"er{self.n}_p{self.p:g}"
        if self.kind == "ba":
            return f"ba{self.n}_m{self.m}"
        return f"tree{self.n}_g{self.gamma:g}"

    @property
    def num_vertices(self) -> int:
        return self.n_leaves + 1 if self.kind == "star" else self.n


def star_family(n_leaves: int, seed: int = 0) -> TopologyFamily:
    return TopologyFamily(kind="star", n_leaves=n_leaves, seed=seed)


def erdos_renyi_family(n: int, p: float = 0.1, seed: int = 0) -> TopologyFamily:
    return TopologyFamily(kind="er", n=n, p=p, seed=seed)


def barabasi_albert_family(n: int, m: int, seed: int = 0) -> TopologyFamily:
    return TopologyFamily(kind="ba", n=n, m=m, seed=seed)


def power_law_tree_family(n: int, gamma: float = 3.0, seed: int = 0) -> TopologyFamily:
    return TopologyFamily(kind="tree", n=n, gamma=gamma, seed=seed)


def _validate(family: TopologyFamily) -> None:
    if family.kind not in FAMILY_KINDS:
        raise ValueError(f"kind: unknown topology family {family.kind!r}")
    if family.kind == "star":
        if family.n_leaves < 1:
            raise ValueError("n_leaves: star needs at least one leaf")
        return
    if family.n < 1:
        raise ValueError("n: vertex count must be >= 1")
    if family.kind == "er" and not (0.0 <= family.p <= 1.0):
        raise ValueError(f"p: edge probability {family.p} outside [0, 1]")
    if family.kind == "ba":
        if family.m < 1:
            raise ValueError("m: attachment count must be >= 1")
        if family.m >= family.n:
            raise ValueError(f"m: attachment count {family.m} must be < n={family.n}")
    if family.kind == "tree" and family.gamma <= 1.0:
        raise ValueError("gamma: power-law exponent must exceed 1")


def generate(family: TopologyFamily) -> ConflictGraph:
    """Instantiate one conflict graph; pure function of (kind, params, seed)."""
    _validate(family)
    rng = np.random.default_rng(np.random.SeedSequence(family.seed))
    if family.kind == "star":
        return _star(family.n_leaves)
    if family.kind == "er":
        return _erdos_renyi(family.n, family.p, rng)
    if family.kind == "ba":
        return _barabasi_albert(family.n, family.m, rng)
    return _power_law_tree(family.n, family.gamma, rng)


def _star(n_leaves: int) -> ConflictGraph:
    # hub is vertex 0, leaves 1..n_leaves
    n = n_leaves + 1
    adj = np.zeros((n, n), dtype=bool)
    adj[0, 1:] = True
    adj[1:, 0] = True
    return ConflictGraph.from_adjacency(adj)


def _erdos_renyi(n: int, p: float, rng: np.random.Generator) -> ConflictGraph:
    draws = rng.random((n, n))
    upper = np.triu(draws < p, k=1)
    return ConflictGraph.from_adjacency(upper | upper.T)


def _barabasi_albert(n: int, m: int, rng: np.random.Generator) -> ConflictGraph:
    # Complete seed clique on vertices 0..m-1, then each new vertex attaches
    # m preferential edges (distinct targets; collisions are resampled).
    adj = np.zeros((n, n), dtype=bool)
    for a in range(m):
        for b in range(a + 1, m):
            adj[a, b] = adj[b, a] = True
    # each vertex appears once per unit of degree
    repeated: list[int] = []
    for a in range(m):
        repeated.extend([a] * (m - 1))
    for v in range(m, n):
        if v == m:
            targets = list(range(m))  # first newcomer wires to the whole clique
        else:
            targets = []
            while len(targets) < m:
                cand = repeated[rng.integers(len(repeated))]
                if cand not in targets:
                    targets.append(cand)
        for t in targets:
            adj[v, t] = adj[t, v] = True
        repeated.extend(targets)
        repeated.extend([v] * m)
    return ConflictGraph.from_adjacency(adj)


def ba_expected_edges(n: int, m: int) -> int:
    """Exact edge count emitted by the BA construction above."""
    return m * (m - 1) // 2 + (n - m) * m


def _power_law_degrees(n: int, gamma: float, rng: np.random.Generator) -> np.ndarray:
    # inverse-CDF sample from P(d) ~ d^-gamma on 1..n-1
    ds = np.arange(1, max(n, 2), dtype=np.float64)
    pmf = ds ** (-gamma)
    cdf = np.cumsum(pmf / pmf.sum())
    u = rng.random(n)
    return (np.searchsorted(cdf, u) + 1).astype(np.int64)


def _power_law_tree(n: int, gamma: float, rng: np.random.Generator) -> ConflictGraph:
    """Connected tree whose degrees track a power-law target sequence.

    Vertices are attached in descending order of target degree, each to the
    already-attached vertex with the most unused degree budget.  When every
    budget is spent (the sampled sequence is infeasible for a tree) the
    remaining vertices fall back to random recursive attachment.
    """
    if n == 1:
        return ConflictGraph.from_edges(1, [])
    target = _power_law_degrees(n, gamma, rng)
    order = np.lexsort((np.arange(n), -target))  # degree desc, id asc
    residual = np.zeros(n, dtype=np.int64)
    edges: list[tuple[int, int]] = []
    attached: list[int] = []
    for v in order.tolist():
        if not attached:
            residual[v] = target[v]
            attached.append(v)
            continue
        capped = [w for w in attached if residual[w] > 0]
        if capped:
            host = max(capped, key=lambda w: (residual[w], -w))
        else:
            host = attached[rng.integers(len(attached))]
        edges.append((min(host, v), max(host, v)))
        residual[host] -= 1
        residual[v] = target[v] - 1
        attached.append(v)
    return ConflictGraph.from_edges(n, edges)


def is_independent_set(g: ConflictGraph, members: Iterable[int]) -> bool:
    """True iff no two members are adjacent in g."""
    idx = np.asarray(list(members), dtype=np.int64)
    if idx.size == 0:
        return True
    if idx.min() < 0 or idx.max() >= g.n:
        raise ValueError(f"vertex id out of range 0..{g.n - 1}")
    return not g.adj[np.ix_(idx, idx)].any()


def degree_stats(g: ConflictGraph) -> tuple[int, int, float]:
    deg = g.degrees()
    return int(deg.min()), int(deg.max()), float(deg.mean())


def to_edge_list(g: ConflictGraph) -> str:
    """Plain-text edge list: first line "n m", then "a b" lines with a < b.

    Lines are sorted, so the text is byte-stable for a given graph.
    """
    lines = [f"{g.n} {g.num_edges}"]
    lines.extend(f"{a} {b}" for a, b in g.edges())
    return "\n".join(lines) + "\n"


def from_edge_list(text: str) -> ConflictGraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty edge-list text")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError("header must be 'n m'")
    n, m = int(head[0]), int(head[1])
    if len(lines) - 1 != m:
        raise ValueError(f"header says {m} edges, found {len(lines) - 1}")
    edges = []
    for ln in lines[1:]:
        a, b = (int(x) for x in ln.split())
        if not a < b:
            raise ValueError(f"edge line '{ln}' must satisfy a < b")
        edges.append((a, b))
    return ConflictGraph.from_edges(n, edges)


def save_graph(g: ConflictGraph, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(to_edge_list(g))


def load_graph(path) -> ConflictGraph:
    with open(path, "r", encoding="ascii") as fh:
        return from_edge_list(fh.read())
