"""
Undirected communication graphs, clique families and the selection operator.

Nodes are labeled ``1..n``. A clique is stored as a strictly increasing tuple
of node labels; the position of a node inside that tuple (1-based) is the
local index used to address its block in a stacked clique vector.
"""

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np


class GraphError(ValueError):
    pass


class CliqueExplosion(RuntimeError):
    """Raised when enumeration would produce more cliques than allowed."""


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``1..n``."""

    n: int
    edges: frozenset = frozenset()
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"need at least one node, got n={self.n}")
        norm = set()
        for e in self.edges:
            i, j = tuple(e) if len(e) == 2 else (None, None)
            if i is None or i == j:
                raise GraphError(f"invalid edge {e!r}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GraphError(f"edge {e!r} has a node outside 1..{self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        adj = [set() for _ in range(self.n + 1)]
        for i, j in norm:
            adj[i].add(j)
            adj[j].add(i)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    @classmethod
    def from_edges(cls, n, edges):
        return cls(n, frozenset(tuple(e) for e in edges))

    @property
    def nodes(self):
        return range(1, self.n + 1)

    def adjacent(self, i, j):
        return j in self._adj[i]

    def neighbors(self, i):
        """Open neighborhood of ``i`` (excludes ``i``)."""
        self._check_node(i)
        return self._adj[i]

    def degree(self, i):
        return len(self.neighbors(i))

    def sorted_edges(self):
        return sorted(self.edges)

    def is_clique(self, members):
        return all(self.adjacent(i, j) for i, j in combinations(members, 2))

    def is_connected(self):
        seen = {1}
        queue = deque([1])
        while queue:
            i = queue.popleft()
            for j in self._adj[i]:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        return len(seen) == self.n

    def laplacian(self):
        L = np.zeros((self.n, self.n))
        for i, j in self.edges:
            L[i - 1, j - 1] = L[j - 1, i - 1] = -1.0
        L[np.diag_indices(self.n)] = [self.degree(i) for i in self.nodes]
        return L

    def _check_node(self, i):
        if not (isinstance(i, (int, np.integer)) and 1 <= i <= self.n):
            raise GraphError(f"unknown node {i!r} (graph has nodes 1..{self.n})")


def neighbor_set(g, i):
    """Closed neighborhood: the neighbors of ``i`` together with ``i`` itself."""
    return frozenset(g.neighbors(i)) | {i}


def erdos_renyi(n, p, rng, connected=True, max_tries=10_000):
    """
    Sample G(n, p), optionally resampling until the graph is connected.

    Parameters
    ----------
    n : int
        Number of nodes.
    p : float
        Edge probability, in (0, 1].
    rng : numpy.random.Generator
        Source of randomness; the draw order is fixed so results are
        reproducible given the generator state.
    connected : bool, optional
        Retry until the sample is connected.
    max_tries : int, optional
        Give up after this many samples.
    """
    if not 0 < p <= 1:
        raise GraphError(f"edge probability must lie in (0, 1], got {p}")
    pairs = list(combinations(range(1, n + 1), 2))
    for _ in range(max_tries):
        keep = rng.random(len(pairs)) < p
        g = Graph(n, frozenset(e for e, k in zip(pairs, keep) if k))
        if not connected or g.is_connected():
            return g
    raise GraphError(f"no connected G({n}, {p}) sample within {max_tries} tries")


def read_graph(path):
    """Read the plain-text format: ``n m`` then ``m`` lines ``i j`` (1-based)."""
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip() and not line.startswith("#")]
    try:
        n, m = int(tokens[0][0]), int(tokens[0][1])
        edges = [(int(t[0]), int(t[1])) for t in tokens[1:]]
    except (IndexError, ValueError) as exc:
        raise GraphError(f"malformed graph file {path}") from exc
    if len(edges) != m:
        raise GraphError(f"{path}: header announces {m} edges, found {len(edges)}")
    return Graph.from_edges(n, edges)


def write_graph(g, path):
    with open(path, "w") as fh:
        fh.write(f"{g.n} {len(g.edges)}\n")
        for i, j in g.sorted_edges():
            fh.write(f"{i} {j}\n")


@dataclass(frozen=True)
class Clique:
    id: int
    members: tuple

    def __len__(self):
        return len(self.members)

    def __contains__(self, i):
        return i in self.members


def position(clique, i):
    """1-based rank of node ``i`` within the sorted member list of ``clique``."""
    members = clique.members if isinstance(clique, Clique) else tuple(clique)
    try:
        return members.index(i) + 1
    except ValueError:
        raise GraphError(f"node {i} is not a member of clique {members}") from None


class CliqueFamily:
    """
    An indexed family of cliques of a graph together with per-agent views.

    Cliques are sorted lexicographically by member tuple and receive ids
    ``0..len-1`` in that order.
    """

    def __init__(self, graph, member_lists, mode="custom", check=True):
        self.graph = graph
        self.mode = mode
        uniq = sorted({tuple(sorted(m)) for m in member_lists})
        if len(uniq) != len(member_lists):
            raise GraphError("duplicate cliques in family")
        for m in uniq:
            if not m:
                raise GraphError("empty clique")
            for i in m:
                graph._check_node(i)
            if check and not graph.is_clique(m):
                raise GraphError(f"{m} does not induce a complete subgraph")
        self.cliques = tuple(Clique(l, m) for l, m in enumerate(uniq))
        views = [[] for _ in range(graph.n + 1)]
        for c in self.cliques:
            for i in c.members:
                views[i].append(c.id)
        self._views = tuple(tuple(v) for v in views)
        sizes = np.array([len(c) for c in self.cliques], dtype=int)
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        self._gather = np.array([i - 1 for c in self.cliques for i in c.members], dtype=int)

    def __len__(self):
        return len(self.cliques)

    def __iter__(self):
        return iter(self.cliques)

    def __getitem__(self, l):
        return self.cliques[l]

    def member_lists(self):
        return [c.members for c in self.cliques]

    def cliques_of(self, i):
        """Ids of the family's cliques that contain agent ``i``."""
        self.graph._check_node(i)
        return self._views[i]

    def count(self, i):
        return len(self.cliques_of(i))

    @property
    def total_size(self):
        return int(self._offsets[-1])

    def block_slice(self, l, d):
        """Slice of clique ``l``'s blocks inside a stacked clique vector."""
        return slice(int(self._offsets[l]) * d, int(self._offsets[l + 1]) * d)

    def covers_all_agents(self):
        return all(self._views[i] for i in self.graph.nodes)


def _clique_cap(g, cap):
    return cap if cap is not None else max(10 * g.n * max(len(g.edges), 1), g.n)


def enumerate_all_cliques(g, cap=None):
    """
    Every nonempty vertex subset of ``g`` that induces a complete subgraph.

    Parameters
    ----------
    g : Graph
    cap : int, optional
        Refuse to produce more than this many cliques. Defaults to
        ``10 * n * |E|``.

    Raises
    ------
    CliqueExplosion
        If the count exceeds ``cap``.
    """
    cap = _clique_cap(g, cap)
    found = []

    # extend only with larger-labeled common neighbors so each clique is built once
    def grow(clique, candidates):
        found.append(clique)
        if len(found) > cap:
            raise CliqueExplosion(f"more than {cap} cliques in graph with n={g.n}")
        for idx, v in enumerate(candidates):
            grow(clique + (v,), [w for w in candidates[idx + 1:] if g.adjacent(v, w)])

    for i in g.nodes:
        grow((i,), sorted(j for j in g.neighbors(i) if j > i))
    return CliqueFamily(g, found, mode="all", check=False)


def enumerate_maximal_cliques(g, cap=None):
    """Inclusion-maximal cliques via Bron-Kerbosch with Tomita pivoting."""
    cap = _clique_cap(g, cap)
    found = []

    def expand(r, p, x):
        if not p and not x:
            found.append(tuple(sorted(r)))
            if len(found) > cap:
                raise CliqueExplosion(f"more than {cap} maximal cliques")
            return
        pivot = max(p | x, key=lambda u: len(p & g.neighbors(u)))
        for v in sorted(p - g.neighbors(pivot)):
            nv = g.neighbors(v)
            expand(r | {v}, p & nv, x & nv)
            p = p - {v}
            x = x | {v}

    expand(set(), set(g.nodes), set())
    return CliqueFamily(g, found, mode="maximal", check=False)


def edge_cliques(g):
    return CliqueFamily(g, g.sorted_edges(), mode="edges", check=False)


def select(fam, x, d):
    """
    Gather agent blocks into stacked clique blocks.

    ``x`` may be given flat (length ``n*d``) or as an ``(n, d)`` array; the
    result is flat with length ``sum_l |C_l| * d``.
    """
    x = np.asarray(x, dtype=float)
    n = fam.graph.n
    if x.size != n * d:
        raise GraphError(f"expected {n}*{d} agent entries, got {x.size}")
    return x.reshape(n, d)[fam._gather].ravel()


def adjoint_select(fam, v, d):
    """
    Scatter-add stacked clique blocks back onto agents.

    Agent ``i`` receives the sum, over cliques containing ``i`` in increasing
    id order, of the clique block at the position of ``i``. Returns an
    ``(n, d)`` array.
    """
    v = np.asarray(v, dtype=float)
    if v.size != fam.total_size * d:
        raise GraphError(f"expected {fam.total_size}*{d} clique entries, got {v.size}")
    v = v.reshape(-1, d)
    out = np.zeros((fam.graph.n, d))
    for c in fam.cliques:
        rows = slice(int(fam._offsets[c.id]), int(fam._offsets[c.id + 1]))
        out[np.array(c.members) - 1] += v[rows]
    return out


def selection_matrix(fam, d):
    """Dense 0/1 matrix of the gather, row block ``(l, j)`` picks agent ``C_l[j]``."""
    W = np.zeros((fam.total_size * d, fam.graph.n * d))
    eye = np.eye(d)
    for row, i in enumerate(fam._gather):
        W[row * d:(row + 1) * d, i * d:(i + 1) * d] = eye
    return W
