"""Undirected network topologies for the balancing protocols.

Builds the standard graph families (complete, cycle, path, 2-D torus, open
grid, hypercube) and explicit edge lists, exposing the combinatorial
quantities the spectral bounds need: degrees, the per-edge degree maximum,
the diameter, and a brute-force isoperimetric number for small graphs.

Node identifiers are dense integers 0..n-1 with a canonical ordering per
family (row-major for torus/grid, binary labels for the hypercube) so that
seeded runs are reproducible. Only connected graphs are accepted: the whole
analysis requires a positive algebraic connectivity.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigError, DisconnectedGraphError

FAMILIES = ("complete", "cycle", "path", "torus2d", "grid2d", "hypercube", "explicit")

#: Largest node count for which the isoperimetric number is brute-forced.
ISO_BRUTE_FORCE_CAP = 14


@dataclass(frozen=True)
class GraphTopology:
    """Immutable connected undirected graph (no self-loops, no multi-edges)."""

    node_count: int
    edges: tuple[tuple[int, int], ...]        # canonical (u, v) with u < v
    neighbors: tuple[tuple[int, ...], ...]    # sorted adjacency lists
    degrees: tuple[int, ...]
    max_degree: int
    diameter: int

    def __hash__(self):
        # Hot lookup key for per-graph caches; hashing the edge tuple every
        # call would dominate small-round costs.
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.node_count, self.edges))
            object.__setattr__(self, "_hash", h)
        return h

    @property
    def n(self) -> int:
        return self.node_count

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def is_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        u, v = (i, j) if i < j else (j, i)
        return (u, v) in self._edge_set()

    def _edge_set(self) -> frozenset:
        cached = self.__dict__.get("_edge_set_cache")
        if cached is None:
            cached = frozenset(self.edges)
            object.__setattr__(self, "_edge_set_cache", cached)
        return cached

    def directed_edges(self):
        """Yield both orientations of every edge."""
        for u, v in self.edges:
            yield u, v
            yield v, u


def pair_degree(g: GraphTopology, i: int, j: int) -> int:
    """max(deg(i), deg(j)) for an edge (i, j); rejects non-edges."""
    if not g.is_edge(i, j):
        raise ConfigError(f"({i}, {j}) is not an edge of the graph")
    return max(g.degrees[i], g.degrees[j])


def bfs_distances(g: GraphTopology, source: int) -> list[int]:
    """Shortest-path hop counts from `source` (-1 marks unreachable)."""
    dist = [-1] * g.node_count
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.neighbors[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _build(n: int, edge_set: set[tuple[int, int]], diameter: int | None) -> GraphTopology:
    if n < 2:
        raise ConfigError(f"graph needs at least 2 nodes, got {n}")
    edges = tuple(sorted(edge_set))
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ConfigError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise ConfigError(f"self-loop at node {u}")
        adj[u].append(v)
        adj[v].append(u)
    neighbors = tuple(tuple(sorted(a)) for a in adj)
    degrees = tuple(len(a) for a in neighbors)
    if min(degrees) == 0:
        raise DisconnectedGraphError("graph has an isolated node")

    probe = None
    if diameter is None:
        # Explicit graphs: BFS from every node gives the diameter and doubles
        # as the connectivity check.
        ecc = []
        for s in range(n):
            dist = bfs_distances(_Tmp(n, neighbors), s)
            if min(dist) < 0:
                raise DisconnectedGraphError(
                    f"graph is not connected (node {dist.index(-1)} unreachable from {s})"
                )
            ecc.append(max(dist))
        diameter = max(ecc)
    else:
        probe = bfs_distances(_Tmp(n, neighbors), 0)
        if min(probe) < 0:
            raise DisconnectedGraphError(
                f"graph is not connected (node {probe.index(-1)} unreachable from 0)"
            )
    return GraphTopology(
        node_count=n,
        edges=edges,
        neighbors=neighbors,
        degrees=degrees,
        max_degree=max(degrees),
        diameter=diameter,
    )


class _Tmp:
    """Minimal adjacency view so bfs_distances can run during construction."""

    def __init__(self, n, neighbors):
        self.node_count = n
        self.neighbors = neighbors


def make_graph(family: str, *, n: int | None = None, rows: int | None = None,
               cols: int | None = None, dim: int | None = None,
               edges=None) -> GraphTopology:
    """Construct a standard family graph or wrap an explicit edge list.

    Families: complete(n), cycle(n>=3), path(n>=2), torus2d(rows, cols, both >=2),
    grid2d(rows, cols), hypercube(dim>=1), explicit(n, edges).
    Family generators set the closed-form diameter; explicit graphs get BFS.
    """
    if family == "complete":
        _need(n is not None and n >= 2, f"complete graph needs n >= 2, got {n}")
        es = {(u, v) for u in range(n) for v in range(u + 1, n)}
        return _build(n, es, diameter=1)
    if family == "cycle":
        _need(n is not None and n >= 3, f"cycle needs n >= 3, got {n}")
        es = {tuple(sorted((u, (u + 1) % n))) for u in range(n)}
        return _build(n, es, diameter=n // 2)
    if family == "path":
        _need(n is not None and n >= 2, f"path needs n >= 2, got {n}")
        es = {(u, u + 1) for u in range(n - 1)}
        return _build(n, es, diameter=n - 1)
    if family in ("torus2d", "grid2d"):
        _need(rows is not None and cols is not None and rows >= 2 and cols >= 2,
              f"{family} needs rows >= 2 and cols >= 2, got {rows}x{cols}")
        wrap = family == "torus2d"
        es: set[tuple[int, int]] = set()
        for r in range(rows):
            for c in range(cols):
                u = r * cols + c
                if wrap or r + 1 < rows:
                    es.add(tuple(sorted((u, ((r + 1) % rows) * cols + c))))
                if wrap or c + 1 < cols:
                    es.add(tuple(sorted((u, r * cols + (c + 1) % cols))))
        diam = rows // 2 + cols // 2 if wrap else (rows - 1) + (cols - 1)
        return _build(rows * cols, es, diameter=diam)
    if family == "hypercube":
        _need(dim is not None and dim >= 1, f"hypercube needs dim >= 1, got {dim}")
        size = 1 << dim
        es = {tuple(sorted((u, u ^ (1 << b)))) for u in range(size) for b in range(dim)}
        return _build(size, es, diameter=dim)
    if family == "explicit":
        _need(n is not None and edges is not None, "explicit graph needs n and edges")
        es = set()
        for u, v in edges:
            if u == v:
                raise ConfigError(f"self-loop at node {u}")
            es.add(tuple(sorted((int(u), int(v)))))
        return _build(n, es, diameter=None)
    raise ConfigError(f"unknown graph family {family!r} (expected one of {FAMILIES})")


def _need(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def parse_edge_list(text: str) -> GraphTopology:
    """Parse the plain-text edge-list format: first line n, then 'u v' lines."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ConfigError("empty edge-list input")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ConfigError(f"edge list must start with the node count, got {lines[0]!r}") from exc
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ConfigError(f"malformed edge line {ln!r} (expected 'u v')")
        edges.append((int(parts[0]), int(parts[1])))
    return make_graph("explicit", n=n, edges=edges)


def load_edge_list(path) -> GraphTopology:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


def isoperimetric_number(g: GraphTopology, cap: int = ISO_BRUTE_FORCE_CAP) -> Fraction:
    """Brute-force i(G) = min over nonempty S, |S| <= n/2, of |boundary(S)| / |S|.

    Enumerates all subsets, so it is limited to n <= cap nodes; larger graphs
    are rejected and callers should fall back to bound-check-only mode.
    """
    n = g.node_count
    if n > cap:
        raise ConfigError(
            f"isoperimetric brute force capped at n <= {cap} (got n={n}); "
            "use bound-check-only mode for larger graphs"
        )
    half = n // 2
    best: Fraction | None = None
    edge_masks = [(1 << u) | (1 << v) for u, v in g.edges]
    for mask in range(1, 1 << n):
        size = mask.bit_count()
        if size > half:
            continue
        boundary = 0
        for em in edge_masks:
            inside = (em & mask).bit_count()
            if inside == 1:
                boundary += 1
        ratio = Fraction(boundary, size)
        if best is None or ratio < best:
            best = ratio
    assert best is not None
    return best
