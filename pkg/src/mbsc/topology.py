"""Coding-tree construction and adaptation.

Two sources of trees: the sensor geometry (undirected minimum spanning tree
over physical distances, oriented away from a root) and the signal itself
(minimum spanning arborescence of a directed graph weighted with observed
average code lengths, refreshed every block until a stopping rule fires).

Edge lists are always stored in a deterministic breadth-first order derived
from the parent array alone: queue from the root, children in ascending
channel id.  Encoder and decoder rebuild identical orders from the same
parents, and every tie-break below is explicit for the same reason.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLayout

LAYOUT_POSITION = "position"
LAYOUT_DIRECTION = "direction"

_UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class SensorLayout:
    """Per-channel 3-D electrode positions or unit lead-direction vectors."""

    kind: str
    coords: np.ndarray  # (m, 3)
    names: tuple = ()

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise InvalidLayout(f"coordinates must be (m, 3), got {coords.shape}")
        object.__setattr__(self, "coords", coords)
        if self.kind == LAYOUT_DIRECTION:
            norms = np.linalg.norm(coords, axis=1)
            bad = np.where(np.abs(norms - 1.0) > _UNIT_NORM_TOL)[0]
            if bad.size:
                raise InvalidLayout(
                    f"direction vectors must be unit length; channel {bad[0]} "
                    f"has norm {norms[bad[0]]:.6g}")
        elif self.kind != LAYOUT_POSITION:
            raise InvalidLayout(f"unknown layout kind {self.kind!r}")

    @property
    def m(self) -> int:
        return self.coords.shape[0]

    def distance(self, i: int, j: int) -> float:
        if self.kind == LAYOUT_POSITION:
            return float(np.linalg.norm(self.coords[i] - self.coords[j]))
        # Lead axes are undirected: opposite vectors measure the same axis.
        d = abs(float(np.dot(self.coords[i], self.coords[j])))
        return float(np.arccos(min(1.0, d)))


@dataclass(frozen=True)
class CodingTree:
    """Rooted spanning tree with a breadth-first-ordered edge list."""

    root: int
    edges: tuple  # ((parent, child), ...) in BFS order

    @classmethod
    def from_parents(cls, parents, root: int) -> "CodingTree":
        """Canonical tree from a parent array (``parents[root]`` ignored)."""
        m = len(parents)
        children = {i: [] for i in range(m)}
        for ch in range(m):
            if ch == root:
                continue
            p = int(parents[ch])
            if p == ch or not (0 <= p < m):
                raise ValueError(f"invalid parent {p} for channel {ch}")
            children[p].append(ch)
        edges = []
        queue = [root]
        seen = {root}
        while queue:
            u = queue.pop(0)
            for v in sorted(children[u]):
                edges.append((u, v))
                seen.add(v)
                queue.append(v)
        if len(seen) != m:
            raise ValueError("parent array does not form a tree rooted at "
                             f"{root}: reached {len(seen)} of {m} channels")
        return cls(root=root, edges=tuple(edges))

    @property
    def m(self) -> int:
        return len(self.edges) + 1

    def parents(self) -> np.ndarray:
        par = np.full(self.m, -1, dtype=np.int64)
        for p, c in self.edges:
            par[c] = p
        return par

    def validate(self) -> None:
        """Arborescence and breadth-first-order checks; raises on violation."""
        seen = {self.root}
        for p, c in self.edges:
            if p not in seen:
                raise ValueError(f"edge ({p},{c}) appears before its parent is reachable")
            if c in seen:
                raise ValueError(f"channel {c} described twice")
            seen.add(c)
        if len(seen) != self.m:
            raise ValueError("edge list does not span all channels")


def star_tree(m: int, root: int) -> CodingTree:
    parents = [root] * m
    parents[root] = -1
    if m == 1:
        return CodingTree(root=root, edges=())
    return CodingTree.from_parents(parents, root)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def build_geometry_tree(layout: SensorLayout, root: int = 0) -> CodingTree:
    """Kruskal MST over pairwise sensor distances, oriented away from ``root``.

    Ties break lexicographically on (weight, min endpoint, max endpoint).
    """
    m = layout.m
    if not (0 <= root < m):
        raise ValueError(f"root {root} out of range for {m} channels")
    if m == 1:
        return CodingTree(root=root, edges=())
    edges = []
    for i in range(m):
        for j in range(i + 1, m):
            edges.append((layout.distance(i, j), i, j))
    edges.sort()
    uf = _UnionFind(m)
    adj = {i: [] for i in range(m)}
    taken = 0
    for w, i, j in edges:
        if uf.union(i, j):
            adj[i].append(j)
            adj[j].append(i)
            taken += 1
            if taken == m - 1:
                break
    parents = np.full(m, -1, dtype=np.int64)
    queue = [root]
    seen = {root}
    while queue:
        u = queue.pop(0)
        for v in sorted(adj[u]):
            if v not in seen:
                parents[v] = u
                seen.add(v)
                queue.append(v)
    return CodingTree.from_parents(parents, root)


def dmst(weights, root: int) -> CodingTree:
    """Minimum spanning arborescence of a complete directed graph.

    ``weights[j, i]`` is the cost of edge j -> i.  Chu-Liu/Edmonds with a
    deterministic tie-break: among equal-weight incoming edges the smallest
    parent index wins.
    """
    W = np.asarray(weights, dtype=np.float64)
    m = W.shape[0]
    if W.shape != (m, m):
        raise ValueError(f"weights must be square, got {W.shape}")
    if not (0 <= root < m):
        raise ValueError(f"root {root} out of range for {m} channels")
    if m == 1:
        return CodingTree(root=root, edges=())
    # arcs as dict node -> list of (weight, src); weights adjusted on contraction
    arcs = {i: [(float(W[j, i]), j) for j in range(m) if j != i]
            for i in range(m) if i != root}
    parents_map = _edmonds(arcs, root, set(range(m)))
    parents = np.full(m, -1, dtype=np.int64)
    for c, p in parents_map.items():
        parents[c] = p
    return CodingTree.from_parents(parents, root)


def _edmonds(arcs, root, nodes):
    """Recursive contraction step; returns {node: parent} over ``nodes``."""
    best = {}
    for v in nodes:
        if v == root:
            continue
        # min by (weight, source index): deterministic tie-break
        bw, bs = min(arcs[v])
        best[v] = (bw, bs)
    # find a cycle among best-parent choices
    cycle = None
    for start in sorted(best):
        path, seen = [], set()
        v = start
        while v != root and v not in seen:
            seen.add(v)
            path.append(v)
            v = best[v][1]
            if v == root:
                break
        if v != root and v in path:
            cycle = path[path.index(v):]
            break
    if cycle is None:
        return {v: s for v, (w, s) in best.items()}
    # contract the cycle into a supernode identified by min cycle member
    cyc = set(cycle)
    super_id = min(cyc)
    cycle_cost = {v: best[v][0] for v in cycle}
    new_nodes = (nodes - cyc) | {super_id}
    new_arcs = {}
    # remember, per (outside source), which cycle node its super-edge enters
    entry_of = {}
    for v in new_nodes:
        if v == root:
            continue
        if v == super_id:
            cand = {}
            for cv in cycle:
                for w, s in arcs[cv]:
                    if s in cyc:
                        continue
                    srep = super_id if s in cyc else s
                    adj_w = w - cycle_cost[cv]
                    key = srep
                    if key not in cand or (adj_w, cv) < cand[key][:2]:
                        cand[key] = (adj_w, cv)
            lst = []
            for s, (adj_w, cv) in sorted(cand.items()):
                lst.append((adj_w, s))
                entry_of[s] = cv
            new_arcs[v] = lst
        else:
            lst = []
            seen_src = {}
            for w, s in arcs[v]:
                srep = super_id if s in cyc else s
                if srep not in seen_src or (w, s) < seen_src[srep][:2]:
                    seen_src[srep] = (w, s)
            for srep, (w, s) in sorted(seen_src.items()):
                lst.append((w, srep))
            new_arcs[v] = lst
    sub = _edmonds(new_arcs, root, new_nodes)
    # expand: the super node's chosen parent enters the cycle at entry_of
    result = {}
    super_parent = sub[super_id]
    entry = entry_of[super_parent]
    for v, p in sub.items():
        if v == super_id:
            continue
        result[v] = p if p != super_id else _cycle_exit(arcs, v, cyc)
    for cv in cycle:
        if cv == entry:
            result[cv] = super_parent
        else:
            result[cv] = best[cv][1]
    return result


def _cycle_exit(arcs, v, cyc):
    """Best in-cycle source for an edge that pointed at the supernode."""
    cand = [(w, s) for (w, s) in arcs[v] if s in cyc]
    return min(cand)[1]


def tree_weight(tree: CodingTree, weights) -> float:
    W = np.asarray(weights, dtype=np.float64)
    return float(sum(W[p, c] for p, c in tree.edges))


class PairStats:
    """Cumulative code length per ordered channel pair during learning."""

    def __init__(self, m: int):
        self.m = m
        self.cum = np.zeros((m, m), dtype=np.int64)
        self.n = 0

    def add_step(self, lengths) -> None:
        """Charge one vector sample's code lengths; lengths[j, i] in bits."""
        self.cum += np.asarray(lengths, dtype=np.int64)
        self.n += 1

    def averages(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros((self.m, self.m))
        return self.cum / self.n


@dataclass
class StoppingState:
    """Block-level stopping rule for the tree-learning stage."""

    B: int = 50
    V: int = 5
    gamma: float = 0.03
    N_s: int = 3000
    c_history: list = field(default_factory=list)

    def record(self, c_i: float) -> None:
        self.c_history.append(float(c_i))


def check_stopping(state: StoppingState, i: int) -> bool:
    """True when learning should stop at block ``i`` (1-based).

    Fires when the mean of the last V absolute changes of the per-block
    average code length falls below ``gamma * c_i``, or when ``i*B``
    reaches the hard cap ``N_s``.
    """
    if i * state.B >= state.N_s:
        return True
    if i <= state.V:
        return False
    c = state.c_history
    deltas = [abs(c[k] - c[k - 1]) for k in range(i - state.V, i)]
    dbar = sum(deltas) / state.V
    return dbar < state.gamma * c[i - 1]
