"""Finite truncations of the integer lattice Z^d with local edge perturbations.

Vertices are d-tuples of ints with sup-norm < L (the box B_L); base edges
connect points at l1-distance 1. A perturbation either deletes a finite set
of base edges (connectivity must survive) or adds a finite set of non-base
edges, all inside a ball B_R around the origin. Fields on a truncation are
zero-extended outside the box; edges crossing the box boundary are either
dropped entirely (``boundary="drop"``, the default) or kept with a
zero-valued phantom endpoint (``boundary="dirichlet"``).
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraph, InvalidSpec, OutOfBox

Vertex = tuple  # d-tuple of ints
Edge = tuple    # canonical pair (lo, hi) of vertices, lo < hi lexicographically

BOUNDARY_MODES = ("drop", "dirichlet")


def sup_norm(x) -> int:
    return max(abs(c) for c in x)


def canonical_edge(x, y) -> Edge:
    """Return the undirected edge (x, y) in its canonical ordered form."""
    x = tuple(int(c) for c in x)
    y = tuple(int(c) for c in y)
    if x == y:
        raise InvalidSpec(f"degenerate edge at {x}")
    return (x, y) if x < y else (y, x)


def is_base_edge(x, y) -> bool:
    """True iff x and y are lattice neighbours (l1-distance exactly 1)."""
    return sum(abs(a - b) for a, b in zip(x, y)) == 1 if len(x) == len(y) else False


def box_vertices(d: int, L: int):
    """All vertices of B_L in canonical (lexicographic) order."""
    return [tuple(c) for c in itertools.product(range(-(L - 1), L), repeat=d)]


@dataclass(frozen=True)
class GraphSpec:
    """Recipe for a perturbed truncation: dimension, box radius, edge changes.

    ``R`` is the radius of the ball containing every perturbed edge; if left
    None it is inferred as the smallest such radius. Deletions and additions
    are mutually exclusive (the two perturbation families are handled
    separately).
    """

    d: int
    L: int
    deletions: frozenset = field(default_factory=frozenset)
    additions: frozenset = field(default_factory=frozenset)
    R: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "deletions", frozenset(canonical_edge(*e) for e in self.deletions))
        object.__setattr__(self, "additions", frozenset(canonical_edge(*e) for e in self.additions))

    def perturbation_radius(self) -> int | None:
        """R if set, else the smallest radius enclosing all perturbed edges."""
        if self.R is not None:
            return self.R
        ends = [v for e in self.deletions | self.additions for v in e]
        if not ends:
            return None
        return max(sup_norm(v) for v in ends) + 1

    def validate(self) -> None:
        if not isinstance(self.d, int) or self.d < 1:
            raise InvalidSpec(f"dimension must be an integer >= 1, got {self.d!r}")
        if not isinstance(self.L, int) or self.L < 2:
            raise InvalidSpec(f"box radius L must be an integer >= 2, got {self.L!r}")
        if self.deletions and self.additions:
            raise InvalidSpec("deletions and additions cannot both be nonempty")
        R_eff = self.perturbation_radius()
        if R_eff is not None and R_eff > self.L:
            raise InvalidSpec(f"perturbation ball B_{R_eff} exceeds the box B_{self.L}")
        for e in self.deletions | self.additions:
            for v in e:
                if len(v) != self.d:
                    raise InvalidSpec(f"vertex {v} has wrong dimension (expected {self.d})")
                if R_eff is not None and sup_norm(v) >= R_eff:
                    raise InvalidSpec(f"perturbed vertex {v} lies outside B_{R_eff}")
                if sup_norm(v) >= self.L:
                    raise InvalidSpec(f"perturbed vertex {v} lies outside the box B_{self.L}")
        for e in self.deletions:
            if not is_base_edge(*e):
                raise InvalidSpec(f"deletion {e} is not a base lattice edge")
        for e in self.additions:
            if is_base_edge(*e):
                raise InvalidSpec(f"addition {e} is already a base lattice edge")
        if self.deletions & self.additions:
            raise InvalidSpec("an edge appears in both deletions and additions")

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "L": self.L,
            "R": self.R,
            "deletions": [[list(x), list(y)] for x, y in sorted(self.deletions)],
            "additions": [[list(x), list(y)] for x, y in sorted(self.additions)],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GraphSpec":
        try:
            return cls(
                d=int(data["d"]),
                L=int(data["L"]),
                deletions=frozenset(canonical_edge(x, y) for x, y in data.get("deletions", [])),
                additions=frozenset(canonical_edge(x, y) for x, y in data.get("additions", [])),
                R=None if data.get("R") is None else int(data["R"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"malformed graph spec: {exc}") from exc


class Graph:
    """Immutable adjacency view of a built truncation.

    Holds the canonical vertex order (lexicographic on coordinates), a dense
    vertex <-> id bijection, the undirected edge list as id pairs, per-vertex
    neighbour lists, and the per-vertex count of base-lattice edges that
    leave the box (used by the dirichlet boundary mode). Safe for concurrent
    reads; never mutated after construction.
    """

    def __init__(self, vertices, edges, d, spec=None, boundary="drop", phantom=None):
        if boundary not in BOUNDARY_MODES:
            raise InvalidSpec(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")
        self.spec = spec
        self.d = d
        self.boundary = boundary
        self.vertices = list(vertices)
        self.n = len(self.vertices)
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.coords = np.array(self.vertices, dtype=np.int64).reshape(self.n, d)
        pairs = sorted((self.index[x], self.index[y]) for x, y in edges)
        self.edges = np.array(pairs, dtype=np.int64).reshape(len(pairs), 2)
        adj = [[] for _ in range(self.n)]
        for i, j in pairs:
            adj[i].append(j)
            adj[j].append(i)
        self.adjacency = [np.array(sorted(a), dtype=np.int64) for a in adj]
        if phantom is None:
            phantom = np.zeros(self.n, dtype=np.float64)
        self.phantom = np.asarray(phantom, dtype=np.float64)
        # sup-norm extent of the vertex set; box semantics for localization
        self.extent = int(np.max(np.abs(self.coords))) if self.n else 0

    @property
    def L(self) -> int:
        return self.spec.L if self.spec is not None else self.extent + 1

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, x) -> int:
        return len(self.adjacency[self.vertex_id(x)])

    def vertex_id(self, x) -> int:
        x = tuple(int(c) for c in x)
        if x not in self.index:
            raise OutOfBox(f"vertex {x} is not in the truncation")
        return self.index[x]

    def __repr__(self):
        return f"Graph(d={self.d}, n={self.n}, edges={self.n_edges}, boundary={self.boundary!r})"


def build_graph(spec: GraphSpec, boundary: str = "drop") -> Graph:
    """Build the truncation graph for a spec: base edges minus deletions plus additions.

    Raises DisconnectedGraph when a deletion spec leaves the box disconnected,
    InvalidSpec when the spec itself is inconsistent.
    """
    spec.validate()
    vertices = box_vertices(spec.d, spec.L)
    vset = set(vertices)
    edges = set()
    for x in vertices:
        for k in range(spec.d):
            y = x[:k] + (x[k] + 1,) + x[k + 1:]
            if y in vset:
                edges.add((x, y))  # x < y lexicographically by construction
    for e in spec.deletions:
        edges.discard(e)
    edges |= spec.additions
    # count of base-lattice neighbours outside the box, per vertex
    coords = np.array(vertices, dtype=np.int64).reshape(len(vertices), spec.d)
    phantom = np.sum(coords == spec.L - 1, axis=1) + np.sum(coords == -(spec.L - 1), axis=1)
    graph = Graph(vertices, edges, spec.d, spec=spec, boundary=boundary,
                  phantom=phantom.astype(np.float64))
    if spec.deletions and not is_connected(graph):
        raise DisconnectedGraph(
            f"deleting {len(spec.deletions)} edge(s) disconnected the box B_{spec.L}")
    return graph


def path_graph(n_vertices: int, boundary: str = "drop") -> Graph:
    """A 1-d path on n_vertices consecutive integers, roughly centred at 0.

    Used for exhaustive-oracle cross checks on tiny graphs; it is not a box
    truncation, so there are no phantom boundary edges in either mode.
    """
    if n_vertices < 1:
        raise InvalidSpec("path graph needs at least one vertex")
    start = -((n_vertices - 1) // 2)
    verts = [(start + i,) for i in range(n_vertices)]
    edges = {(verts[i], verts[i + 1]) for i in range(n_vertices - 1)}
    return Graph(verts, edges, 1, spec=None, boundary=boundary)


def neighbors(graph: Graph, x) -> list:
    """Neighbours of x in the graph, in canonical (lexicographic) order."""
    i = graph.vertex_id(x)
    return [graph.vertices[j] for j in graph.adjacency[i]]


def is_connected(graph: Graph) -> bool:
    """True iff breadth-first search from one vertex reaches the whole box."""
    if graph.n == 0:
        return True
    seen = np.zeros(graph.n, dtype=bool)
    queue = deque([0])
    seen[0] = True
    count = 1
    while queue:
        i = queue.popleft()
        for j in graph.adjacency[i]:
            if not seen[j]:
                seen[j] = True
                count += 1
                queue.append(j)
    return count == graph.n


def ball_boundary_edges(d: int, R: int) -> list:
    """Base edges (y, z) with y inside B_R and z outside, canonically ordered."""
    out = set()
    for y in box_vertices(d, R):
        for k in range(d):
            for s in (1, -1):
                z = y[:k] + (y[k] + s,) + y[k + 1:]
                if sup_norm(z) >= R:
                    out.add(canonical_edge(y, z))
    return sorted(out)


def sphere_deletion_spec(d: int, R: int, L: int, kept_edge=None) -> GraphSpec:
    """Delete every edge crossing the sphere of B_R except one kept edge.

    The kept edge defaults to ((R-1, 0, ..., 0), (R, 0, ..., 0)); pass an
    explicit edge or a selector callable over the boundary edge list to
    override. All deleted edges lie inside B_{R+1}, which is recorded as the
    spec's perturbation radius.
    """
    if not (isinstance(R, int) and isinstance(L, int) and 1 <= R < L):
        raise InvalidSpec(f"need integers 1 <= R < L, got R={R!r}, L={L!r}")
    boundary = ball_boundary_edges(d, R)
    if kept_edge is None:
        lo = tuple([R - 1] + [0] * (d - 1))
        hi = tuple([R] + [0] * (d - 1))
        kept = canonical_edge(lo, hi)
    elif callable(kept_edge):
        kept = canonical_edge(*kept_edge(boundary))
    else:
        kept = canonical_edge(*kept_edge)
    if kept not in boundary:
        raise InvalidSpec(f"kept edge {kept} is not a boundary edge of B_{R}")
    deletions = frozenset(e for e in boundary if e != kept)
    return GraphSpec(d=d, L=L, deletions=deletions, R=R + 1)


def star_addition_spec(d: int, R: int, L: int) -> GraphSpec:
    """Join the origin and its lattice neighbours to every vertex of B_R.

    Adds (c, y) for each centre c in {0, +-e_k} and every y in B_R that is
    neither c itself nor already a lattice neighbour of c, deduplicated in
    canonical form.
    """
    if not (isinstance(R, int) and isinstance(L, int) and 2 <= R < L):
        raise InvalidSpec(f"need integers 2 <= R < L, got R={R!r}, L={L!r}")
    origin = (0,) * d
    centres = [origin]
    for k in range(d):
        for s in (1, -1):
            centres.append(origin[:k] + (s,) + origin[k + 1:])
    additions = set()
    for c in centres:
        for y in box_vertices(d, R):
            if y == c or is_base_edge(c, y):
                continue
            additions.add(canonical_edge(c, y))
    if not additions:
        raise InvalidSpec(f"star addition with d={d}, R={R} produced no edges")
    return GraphSpec(d=d, L=L, additions=frozenset(additions), R=R)
