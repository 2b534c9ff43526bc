"""Planar geometry: robot states, proximity graphs, graph predicates, Voronoi cells.

All positions are 2-vectors in meters. Robots are indexed 1..n throughout the
package (index 0 is never a robot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Invalid geometric input (degenerate tessellation, bad indices, ...)."""


@dataclass(frozen=True)
class RobotState:
    """Position and identity of one robot."""

    id: int
    position: np.ndarray

    def __post_init__(self):
        pos = self.position
        if not (isinstance(pos, np.ndarray) and pos.dtype == np.float64 and pos.shape == (2,)):
            pos = np.asarray(pos, dtype=float).reshape(2)
            object.__setattr__(self, "position", pos)
        if not (math.isfinite(pos[0]) and math.isfinite(pos[1])):
            raise GeometryError(f"robot {self.id}: non-finite position {pos}")


@dataclass(frozen=True)
class InteractionGraph:
    """Undirected edge set over robot indices 1..n (no self-loops)."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise GeometryError(f"self-loop at vertex {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GeometryError(f"edge ({i},{j}) outside 1..{self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n, edges):
        return cls(n, frozenset(tuple(e) for e in edges))

    def has_edge(self, i, j):
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i):
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def degree(self, i):
        return len(self.neighbors(i))

    def sorted_edges(self):
        return sorted(self.edges)


@dataclass(frozen=True)
class Obstacle:
    """Ellipse (x-center)' diag(a, b) (x-center) = 1; interior is the keep-out set."""

    center: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise GeometryError(f"obstacle shape coefficients must be positive, got {self.a}, {self.b}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangular workspace with optional ellipsoidal obstacles."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    obstacles: tuple = ()

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise GeometryError("domain bounds are degenerate")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, p):
        x, y = float(p[0]), float(p[1])
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def corners(self):
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )


def proximity_graph(states, delta):
    """Graph with an edge wherever two robots are within sensing range.

    The range test is boundary-inclusive: a pair at distance exactly ``delta``
    is connected.
    """
    if delta <= 0:
        raise GeometryError(f"delta must be positive, got {delta}")
    if not states:
        raise GeometryError("states must be non-empty")
    n = len(states)
    ids = sorted(s.id for s in states)
    if ids != list(range(1, n + 1)):
        raise GeometryError(f"robot ids must be 1..{n}, got {ids}")
    by_id = {s.id: s.position for s in states}
    edges = set()
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            d = by_id[i] - by_id[j]
            if float(d @ d) <= delta * delta:
                edges.add((i, j))
    return InteractionGraph(n, frozenset(edges))


def is_spanning_subgraph(required, live):
    """True iff every edge of ``required`` is present in ``live``."""
    if required.n != live.n:
        raise GeometryError(f"vertex count mismatch: {required.n} vs {live.n}")
    return required.edges <= live.edges


def is_cycle_graph(g):
    """True iff ``g`` is a single cycle: connected with every degree exactly 2."""
    if g.n < 3:
        raise GeometryError(f"a cycle needs at least 3 vertices, got {g.n}")
    if any(g.degree(i) != 2 for i in range(1, g.n + 1)):
        return False
    return _is_connected(g, range(1, g.n + 1))


def induced_subgraph_is_cycle(g, vertices):
    """Cycle test restricted to ``vertices`` using only edges among them."""
    verts = sorted(set(vertices))
    if len(verts) < 3:
        raise GeometryError(f"a cycle needs at least 3 vertices, got {len(verts)}")
    vset = set(verts)
    sub = [(a, b) for a, b in g.edges if a in vset and b in vset]
    deg = {v: 0 for v in verts}
    for a, b in sub:
        deg[a] += 1
        deg[b] += 1
    if any(d != 2 for d in deg.values()):
        return False
    adj = {v: set() for v in verts}
    for a, b in sub:
        adj[a].add(b)
        adj[b].add(a)
    return _reachable_count(adj, verts[0]) == len(verts)


def _is_connected(g, vertices):
    verts = list(vertices)
    adj = {v: g.neighbors(v) for v in verts}
    return _reachable_count(adj, verts[0]) == len(verts)


def _reachable_count(adj, start):
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen)


def clip_polygon_halfplane(poly, normal, offset):
    """Sutherland-Hodgman clip of a convex polygon to {p : normal . p <= offset}."""
    out = []
    m = len(poly)
    for k in range(m):
        cur = poly[k]
        nxt = poly[(k + 1) % m]
        c_in = float(np.dot(normal, cur)) <= offset
        n_in = float(np.dot(normal, nxt)) <= offset
        if c_in:
            out.append(cur)
        if c_in != n_in:
            dc = float(np.dot(normal, cur)) - offset
            dn = float(np.dot(normal, nxt)) - offset
            t = dc / (dc - dn)
            out.append(cur + t * (nxt - cur))
    return np.array(out) if out else np.empty((0, 2))


def polygon_area_centroid(poly):
    """Signed area and centroid of a simple polygon (standard shoelace forms)."""
    x = poly[:, 0]
    y = poly[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * float(np.sum(cross))
    if abs(a) < 1e-14:
        return 0.0, np.mean(poly, axis=0)
    cx = float(np.sum((x + np.roll(x, -1)) * cross)) / (6.0 * a)
    cy = float(np.sum((y + np.roll(y, -1)) * cross)) / (6.0 * a)
    return a, np.array([cx, cy])


def voronoi_cells(states, domain):
    """Voronoi cell polygons clipped to the domain rectangle, one per robot.

    Each cell is the intersection of the rectangle with the bisector
    half-planes against every other site, so the cells partition the domain
    exactly. Coincident sites are rejected.
    """
    pts = [s.position for s in states]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = pts[i] - pts[j]
            if float(d @ d) < 1e-18:
                raise GeometryError(
                    f"coincident robots {states[i].id} and {states[j].id}: tessellation is degenerate"
                )
    for s in states:
        if not domain.contains(s.position):
            raise GeometryError(f"robot {s.id} at {s.position} lies outside the domain")
    cells = []
    rect = domain.corners()
    for i, pi in enumerate(pts):
        poly = rect.copy()
        for j, pj in enumerate(pts):
            if j == i or len(poly) == 0:
                continue
            # points closer to pi than pj: (pj - pi) . p <= (|pj|^2 - |pi|^2) / 2
            normal = pj - pi
            offset = 0.5 * (float(pj @ pj) - float(pi @ pi))
            poly = clip_polygon_halfplane(poly, normal, offset)
        cells.append(poly)
    return cells


def voronoi_centroids(states, domain):
    """Area centroid of each robot's Voronoi cell clipped to the domain."""
    out = []
    for cell in voronoi_cells(states, domain):
        if len(cell) < 3:
            raise GeometryError("empty Voronoi cell (site outside domain?)")
        _, c = polygon_area_centroid(cell)
        out.append(c)
    return out


def point_in_polygon(poly, p):
    """Convex-polygon membership, boundary-inclusive."""
    m = len(poly)
    if m < 3:
        return False
    sign = 0.0
    for k in range(m):
        a = poly[k]
        b = poly[(k + 1) % m]
        cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if abs(cr) < 1e-12:
            continue
        if sign == 0.0:
            sign = cr
        elif sign * cr < 0:
            return False
    return True
