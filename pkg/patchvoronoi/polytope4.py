"""
Incremental hyperplane cutting of a 4D prism.

A tetrahedron swept along the distance axis gives a 4D triangular prism
bounded by six hyperplanes: the floor d = d_min, the roof d = d_max and the
four swept side faces. Every inserted distance field d = f(x, y, z) keeps
the part of the polytope below its graph; after all fields are in, the
facets that lie on fields form the lower envelope, and the 2-faces shared
by two fields project onto bisector polygons inside the tet.

The polytope is stored as vertices with their sets of incident planes plus
an explicit edge set. Faces of higher dimension are recovered from the
incidences: a 2-face is the vertex set shared by two planes, a 3-face
(cell) the vertex set of one plane.

Two backends:

- ``float``: vertices carry double coordinates and are classified against
  a plane with tolerance epsilon; the eight edge cases below decide what
  happens to each edge.
- ``exact``: vertices are encoded by four defining planes; side tests solve
  that 4x4 system over the rationals and take the exact sign.

All planes share one implicit form, value(v) = g . (x, y, z, d) + w, with
fields oriented so that value(v) = d - f(x, y, z) (positive above).
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from .constants import BACKENDS, DEFAULT_BACKEND, DEFAULT_EPSILON, ERROR_INCONSISTENT_CUT
from .exceptions import ConfigurationError, FieldError, InconsistentCutError, PolytopeError
from .linear_field import GeneratorTag, Hyperplane4, solve_exact

logger = logging.getLogger(__name__)

FLOOR = 0
ROOF = 1
SIDES = (2, 3, 4, 5)  # side 2 + k is the swept face opposite tet vertex k
INITIAL_PLANES = frozenset((FLOOR, ROOF) + SIDES)

Row = Tuple[Fraction, Fraction, Fraction, Fraction, Fraction]


@dataclass(frozen=True)
class CutConfig:
    """Cutting parameters for one tet."""

    epsilon: float = DEFAULT_EPSILON
    backend: str = DEFAULT_BACKEND
    d_max: float = 1.0
    d_min: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if not self.d_max > self.d_min:
            raise ConfigurationError(
                f"d_max ({self.d_max}) must exceed d_min ({self.d_min})"
            )

    @property
    def exact(self) -> bool:
        return self.backend == "exact"


class SideClassification(Enum):
    ABOVE = "above"
    BELOW = "below"
    ON = "on"


class EdgeAction(Enum):
    INTERSECT = "intersect"
    DISCARD = "discard"
    KEEP = "keep"


@dataclass(frozen=True)
class Plane:
    """A registered hyperplane: implicit row plus the field it came from."""

    id: int
    row: np.ndarray
    exact_row: Optional[Row]
    field: Optional[Hyperplane4] = None

    @property
    def is_initial(self) -> bool:
        return self.id in INITIAL_PLANES


@dataclass(eq=False)
class Vertex4:
    """Polytope vertex: coordinates, incident planes and (exact mode) encoding."""

    id: int
    point: np.ndarray
    planes: FrozenSet[int]
    encoding: Optional[Tuple[int, int, int, int]] = None
    exact: Optional[Tuple[Fraction, ...]] = None

    @property
    def point3(self) -> np.ndarray:
        return self.point[:3]


@dataclass(frozen=True)
class EnvelopeFacet:
    """A bisector polygon of the lower envelope, projected to 3D."""

    points: np.ndarray
    planes: Tuple[int, int]
    tags: Tuple[GeneratorTag, GeneratorTag]


def field_row(h: Hyperplane4) -> np.ndarray:
    a, b, c, w = (float(v) for v in h.coefficients)
    return np.array([-a, -b, -c, 1.0, -w])


def field_exact_row(h: Hyperplane4) -> Row:
    a, b, c, w = (Fraction(v) for v in h.coefficients)
    return (-a, -b, -c, Fraction(1), -w)


def pi_value(point, h: Hyperplane4) -> float:
    """pi(v) = d - (a*x + b*y + c*z + w); positive above the field."""
    p = np.asarray(point, dtype=float)
    return float(field_row(h)[:4] @ p + field_row(h)[4])


def classify(v, h: Hyperplane4, cfg: CutConfig) -> SideClassification:
    """
    Side of a 4D point with respect to a field hyperplane.

    Float mode uses the tolerance band |pi| < epsilon for ON. Exact mode
    evaluates pi over the rationals; a zero value counts as ABOVE because
    the upper side is closed (d >= f).
    """
    if isinstance(v, Vertex4):
        if cfg.exact and v.exact is not None:
            return SideClassification.ABOVE if _exact_value(v.exact, field_exact_row(h)) >= 0 else SideClassification.BELOW
        v = v.point
    if cfg.exact:
        value = _exact_value(tuple(Fraction(float(x)) for x in v), field_exact_row(h))
        return SideClassification.ABOVE if value >= 0 else SideClassification.BELOW
    value = pi_value(v, h)
    if value >= cfg.epsilon:
        return SideClassification.ABOVE
    if value <= -cfg.epsilon:
        return SideClassification.BELOW
    return SideClassification.ON


def edge_case(pi1: float, pi2: float, epsilon: float) -> int:
    """Number (1-8) of the tolerance case an edge with these end values falls in."""
    on1, on2 = abs(pi1) < epsilon, abs(pi2) < epsilon
    if not on1 and not on2:
        if pi1 * pi2 < 0:
            return 1
        return 2 if pi1 > 0 else 3
    if not on1:
        return 4 if pi1 > 0 else 5
    if not on2:
        return 6 if pi2 > 0 else 7
    return 8


_CASE_ACTIONS = {
    1: EdgeAction.INTERSECT,
    2: EdgeAction.DISCARD,
    3: EdgeAction.KEEP,
    4: EdgeAction.DISCARD,
    5: EdgeAction.INTERSECT,
    6: EdgeAction.DISCARD,
    7: EdgeAction.INTERSECT,
    8: EdgeAction.DISCARD,
}


def edge_action(pi1: float, pi2: float, epsilon: float) -> EdgeAction:
    return _CASE_ACTIONS[edge_case(pi1, pi2, epsilon)]


def edge_hyperplane_intersection(v1, v2, h: Hyperplane4, cfg: Optional[CutConfig] = None) -> np.ndarray:
    """
    Point where the segment v1-v2 crosses the field hyperplane.

    Raises:
        PolytopeError: if both endpoints lie strictly on the same side
    """
    p1 = np.asarray(v1.point if isinstance(v1, Vertex4) else v1, dtype=float)
    p2 = np.asarray(v2.point if isinstance(v2, Vertex4) else v2, dtype=float)
    pi1, pi2 = pi_value(p1, h), pi_value(p2, h)
    if pi1 * pi2 > 0 or pi1 == pi2:
        raise PolytopeError(
            f"Edge does not cross the hyperplane (pi1={pi1:.3e}, pi2={pi2:.3e})"
        )
    return pi1 / (pi1 - pi2) * p2 - pi2 / (pi1 - pi2) * p1


def _exact_value(point: Sequence[Fraction], row: Row) -> Fraction:
    return row[0] * point[0] + row[1] * point[1] + row[2] * point[2] + row[3] * point[3] + row[4]


def solve_encoding(rows: Sequence[Row]) -> Tuple[Fraction, ...]:
    """Exact intersection point of four planes, A v + w = 0."""
    try:
        return solve_exact([r[:4] for r in rows], [-r[4] for r in rows])
    except FieldError:
        raise PolytopeError("Encoding planes do not meet in a single point")


def exact_side(encoding: Sequence[Row], query: Row) -> int:
    """
    Sign of g^T A^-1 (-w) + w for the vertex encoded by four planes.

    Args:
        encoding: Four implicit plane rows (g, w) defining the vertex
        query: Implicit row of the plane to test against

    Returns:
        -1, 0 or +1

    Raises:
        PolytopeError: if the four planes do not meet in a point
    """
    point = solve_encoding(encoding)
    value = _exact_value(point, tuple(Fraction(v) for v in query))
    return (value > 0) - (value < 0)


class Polytope4:
    """
    Convex 4D polytope over one tetrahedron, cut incrementally by fields.

    A Polytope4 is owned by one worker at a time.
    """

    def __init__(self, tet, cfg: CutConfig):
        self.cfg = cfg
        self.tet = np.asarray(tet, dtype=float)
        self.planes: Dict[int, Plane] = {}
        self.vertices: Dict[int, Vertex4] = {}
        self.edges: Set[Tuple[int, int]] = set()
        self._next_vertex = 0
        self._next_plane = 0
        self.cut_count = 0

    # registration

    def _register(self, row: np.ndarray, exact_row: Optional[Row], h: Optional[Hyperplane4] = None) -> int:
        pid = self._next_plane
        self._next_plane += 1
        self.planes[pid] = Plane(pid, row, exact_row if self.cfg.exact else None, h)
        return pid

    def _add_vertex(self, point, planes, encoding=None, exact=None) -> int:
        vid = self._next_vertex
        self._next_vertex += 1
        self.vertices[vid] = Vertex4(vid, np.asarray(point, dtype=float), frozenset(planes), encoding, exact)
        return vid

    @property
    def fields(self) -> Dict[int, Hyperplane4]:
        return {pid: p.field for pid, p in self.planes.items() if p.field is not None}

    def plane_value(self, vid: int, pid: int) -> float:
        row = self.planes[pid].row
        return float(row[:4] @ self.vertices[vid].point + row[4])

    def _exact_plane_value(self, vertex: Vertex4, pid: int) -> Fraction:
        return _exact_value(vertex.exact, self.planes[pid].exact_row)

    # combinatorial structure

    def incident(self, *pids: int) -> List[int]:
        want = set(pids)
        return sorted(vid for vid, v in self.vertices.items() if want <= v.planes)

    def _affine_rank(self, vids: Sequence[int]) -> int:
        if len(vids) < 2:
            return 0
        if self.cfg.exact:
            base = self.vertices[vids[0]].exact
            rows = [[x - y for x, y in zip(self.vertices[v].exact, base)] for v in vids[1:]]
            return _exact_rank(rows)
        pts = np.array([self.vertices[v].point for v in vids])
        centered = pts - pts.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        scale = max(1.0, float(np.abs(pts).max()))
        return int((sv > 1e-9 * scale).sum())

    def face_loop(self, p: int, q: int) -> Optional[List[int]]:
        """
        Vertex loop of the 2-face supported by planes p and q, or None.

        The loop starts at its lowest vertex id and continues towards the
        lower-id neighbour.

        Raises:
            InconsistentCutError: if the face's edges do not form one cycle
        """
        vids = self.incident(p, q)
        if len(vids) < 3 or self._affine_rank(vids) != 2:
            return None
        members = set(vids)
        nbrs: Dict[int, List[int]] = {v: [] for v in vids}
        for a, b in self.edges:
            if a in members and b in members:
                nbrs[a].append(b)
                nbrs[b].append(a)
        if any(len(n) != 2 for n in nbrs.values()):
            raise InconsistentCutError(
                f"{ERROR_INCONSISTENT_CUT}: face ({p}, {q}) is not a simple cycle"
            )
        start = vids[0]
        loop = [start, min(nbrs[start])]
        while True:
            prev, cur = loop[-2], loop[-1]
            nxt = nbrs[cur][0] if nbrs[cur][1] == prev else nbrs[cur][1]
            if nxt == start:
                break
            loop.append(nxt)
            if len(loop) > len(vids):
                raise InconsistentCutError(
                    f"{ERROR_INCONSISTENT_CUT}: face ({p}, {q}) loop does not close"
                )
        if len(loop) != len(vids):
            raise InconsistentCutError(
                f"{ERROR_INCONSISTENT_CUT}: face ({p}, {q}) splits into several cycles"
            )
        return loop

    @property
    def faces2(self) -> Dict[Tuple[int, int], List[int]]:
        """2-faces keyed by their supporting plane pair."""
        pairs: Set[Tuple[int, int]] = set()
        for v in self.vertices.values():
            pairs.update(itertools.combinations(sorted(v.planes), 2))
        out = {}
        for p, q in sorted(pairs):
            loop = self.face_loop(p, q)
            if loop is not None:
                out[(p, q)] = loop
        return out

    @property
    def cells3(self) -> Dict[int, List[Tuple[int, int]]]:
        """3-faces keyed by their supporting plane, each listing its 2-faces."""
        faces = self.faces2
        out: Dict[int, List[Tuple[int, int]]] = {}
        for pid in sorted(self.planes):
            vids = self.incident(pid)
            if len(vids) >= 4 and self._affine_rank(vids) == 3:
                out[pid] = [key for key in faces if pid in key]
        return out

    # cutting

    def cut(self, h: Hyperplane4) -> List[int]:
        """
        Keep the part of the polytope on or below the field hyperplane.

        Returns:
            Ids of the vertices created by this cut, in creation order

        Raises:
            InconsistentCutError: float mode, when the cut leaves an
                inconsistent structure (the caller should retry the tet in
                exact mode)
        """
        for existing in self.fields.values():
            if tuple(map(float, existing.coefficients)) == tuple(map(float, h.coefficients)):
                logger.debug(f"Skipping duplicate field {h.tag}")
                return []
        pid = self._register(field_row(h), field_exact_row(h) if self.cfg.exact else None, h)
        self.cut_count += 1
        if self.cfg.exact:
            return self._cut_exact(pid)
        return self._cut_float(pid)

    def _cut_float(self, pid: int) -> List[int]:
        eps = self.cfg.epsilon
        values = {vid: self.plane_value(vid, pid) for vid in self.vertices}
        side = {
            vid: SideClassification.ABOVE
            if val >= eps
            else SideClassification.BELOW
            if val <= -eps
            else SideClassification.ON
            for vid, val in values.items()
        }
        above = {v for v, s in side.items() if s is SideClassification.ABOVE}
        on = {v for v, s in side.items() if s is SideClassification.ON}
        if not above:
            self._tag(on, pid)
            return []
        if len(above) + len(on) == len(self.vertices):
            raise PolytopeError(f"Field {self.planes[pid].field.tag} lies below the prism floor")

        kept_edges: Set[Tuple[int, int]] = set()
        crossings: List[Tuple[int, int]] = []
        for a, b in sorted(self.edges):
            action = edge_action(values[a], values[b], eps)
            if action is EdgeAction.KEEP:
                kept_edges.add((a, b))
            elif action is EdgeAction.INTERSECT:
                if side[a] is SideClassification.ON or side[b] is SideClassification.ON:
                    # the crossing is the ON endpoint itself
                    kept_edges.add((a, b))
                else:
                    crossings.append((a, b))

        new_ids: List[int] = []
        for a, b in crossings:
            below, top = (a, b) if side[a] is SideClassification.BELOW else (b, a)
            va, vb = self.vertices[top], self.vertices[below]
            point = edge_hyperplane_intersection(va.point, vb.point, self.planes[pid].field)
            common = va.planes & vb.planes
            vid = self._add_vertex(point, common | {pid})
            new_ids.append(vid)
            kept_edges.add(tuple(sorted((below, vid))))

        self._tag(on, pid)
        for vid in above:
            del self.vertices[vid]
        on_h = set(new_ids) | on
        self.edges = kept_edges | self._adjacent_pairs(on_h)
        self._check_float_cut(pid, new_ids, on_h)
        return new_ids

    def _cut_exact(self, pid: int) -> List[int]:
        signs = {}
        for vid, v in self.vertices.items():
            value = self._exact_plane_value(v, pid)
            signs[vid] = (value > 0) - (value < 0)
        above = {v for v, s in signs.items() if s > 0}
        on = {v for v, s in signs.items() if s == 0}
        if not above:
            self._tag(on, pid)
            return []
        if len(above) + len(on) == len(self.vertices):
            raise PolytopeError(f"Field {self.planes[pid].field.tag} lies below the prism floor")

        kept_edges: Set[Tuple[int, int]] = set()
        new_ids: List[int] = []
        for a, b in sorted(self.edges):
            sa, sb = signs[a], signs[b]
            if sa <= 0 and sb <= 0:
                if not (sa == 0 and sb == 0):
                    kept_edges.add((a, b))
            elif sa * sb < 0:
                below = a if sa < 0 else b
                vid = self._exact_intersection(a, b, pid)
                new_ids.append(vid)
                kept_edges.add(tuple(sorted((below, vid))))

        self._tag(on, pid)
        for vid in above:
            del self.vertices[vid]
        self.edges = kept_edges | self._adjacent_pairs(set(new_ids) | on)
        return new_ids

    def _exact_intersection(self, a: int, b: int, pid: int) -> int:
        """New vertex on edge a-b encoded by three of its common planes plus pid."""
        common = sorted(self.vertices[a].planes & self.vertices[b].planes)
        for trio in itertools.combinations(common, 3):
            encoding = tuple(sorted(trio + (pid,)))
            try:
                exact = solve_encoding([self.planes[p].exact_row for p in encoding])
            except PolytopeError:
                continue
            planes = {
                q for q, plane in self.planes.items() if _exact_value(exact, plane.exact_row) == 0
            }
            point = np.array([float(x) for x in exact])
            return self._add_vertex(point, planes, encoding=encoding, exact=exact)
        raise PolytopeError(f"No independent encoding for the crossing of edge ({a}, {b})")

    def _tag(self, vids, pid: int) -> None:
        for vid in vids:
            v = self.vertices[vid]
            v.planes = v.planes | {pid}

    def _adjacent_pairs(self, vids: Set[int]) -> Set[Tuple[int, int]]:
        """Edges among vertices on the new facet, by the combinatorial adjacency test."""
        ordered = sorted(vids)
        out = set()
        for i, a in enumerate(ordered):
            pa = self.vertices[a].planes
            for b in ordered[i + 1 :]:
                common = pa & self.vertices[b].planes
                if len(common) < 3:
                    continue
                if any(
                    c != a and c != b and common <= self.vertices[c].planes for c in ordered
                ):
                    continue
                out.add((a, b))
        return out

    def _check_float_cut(self, pid: int, new_ids: List[int], on_h: Set[int]) -> None:
        for vid in new_ids:
            if len(self.vertices[vid].planes) < 4:
                raise InconsistentCutError(
                    f"{ERROR_INCONSISTENT_CUT}: vertex {vid} lies on fewer than four planes"
                )
        degree: Dict[int, int] = {v: 0 for v in on_h}
        for a, b in self.edges:
            if a in degree:
                degree[a] += 1
            if b in degree:
                degree[b] += 1
        low = [v for v, d in degree.items() if d < 4]
        if low:
            raise InconsistentCutError(
                f"{ERROR_INCONSISTENT_CUT}: vertices {low} have fewer than four edges"
            )
        hits: Dict[Tuple[int, int], int] = {}
        for vid in on_h:
            for pair in itertools.combinations(sorted(self.vertices[vid].planes - {pid}), 2):
                hits[pair] = hits.get(pair, 0) + 1
        for (p, q), count in sorted(hits.items()):
            if count <= 2:
                continue
            off_plane = [v for v in self.incident(p, q) if v not in on_h]
            if off_plane:
                raise InconsistentCutError(
                    f"{ERROR_INCONSISTENT_CUT}: hyperplane meets face ({p}, {q}) in {count} points"
                )

    # queries

    def check_consistency(self) -> List[str]:
        """Structural problems found in the polytope (empty when consistent)."""
        problems = []
        for a, b in sorted(self.edges):
            if a not in self.vertices or b not in self.vertices:
                problems.append(f"edge ({a}, {b}) references a removed vertex")
            elif len(self.vertices[a].planes & self.vertices[b].planes) < 3:
                problems.append(f"edge ({a}, {b}) shares fewer than three planes")
        for vid, v in sorted(self.vertices.items()):
            if len(v.planes) < 4:
                problems.append(f"vertex {vid} lies on fewer than four planes")
        for pid in self.fields:
            for vid in self.vertices:
                if not self.cfg.exact and self.plane_value(vid, pid) > self.cfg.epsilon:
                    problems.append(f"vertex {vid} lies above field plane {pid}")
        try:
            faces = self.faces2
        except InconsistentCutError as e:
            return problems + [str(e)]
        for key in faces:
            cells = [p for p in key if len(self.incident(p)) >= 4 and self._affine_rank(self.incident(p)) == 3]
            if len(cells) != 2:
                problems.append(f"face {key} borders {len(cells)} cells")
        for a, b in sorted(self.edges):
            count = sum(1 for loop in faces.values() if a in loop and b in loop)
            if count < 3:
                problems.append(f"edge ({a}, {b}) borders {count} faces")
        return problems

    def projected_vertices(self) -> np.ndarray:
        return np.array([v.point3 for _, v in sorted(self.vertices.items())])

    def envelope_cells(self) -> Dict[int, np.ndarray]:
        """Projected vertex sets of the cells supported by fields."""
        out = {}
        for pid in sorted(self.fields):
            vids = self.incident(pid)
            if len(vids) >= 4 and self._affine_rank(vids) == 3:
                out[pid] = np.array([self.vertices[v].point3 for v in vids])
        return out

    def surviving_fields(self) -> List[GeneratorTag]:
        """Tags of the fields that own a cell of the lower envelope."""
        return [self.planes[pid].field.tag for pid in self.envelope_cells()]


def _exact_rank(rows: List[List[Fraction]]) -> int:
    m = [list(r) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                factor = m[r][col] / m[rank][col]
                m[r] = [x - factor * y for x, y in zip(m[r], m[rank])]
        rank += 1
    return rank


def _side_row(tet: np.ndarray, k: int) -> Tuple[np.ndarray, Row]:
    """Swept side face opposite tet vertex k (vertical hyperplane)."""
    others = [tet[j] for j in range(4) if j != k]
    normal = np.cross(others[1] - others[0], others[2] - others[0])
    row = np.array([normal[0], normal[1], normal[2], 0.0, -float(normal @ others[0])])
    ex = [[Fraction(float(c)) for c in p] for p in others]
    u = [ex[1][i] - ex[0][i] for i in range(3)]
    v = [ex[2][i] - ex[0][i] for i in range(3)]
    n = (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])
    exact_row = (n[0], n[1], n[2], Fraction(0), -(n[0] * ex[0][0] + n[1] * ex[0][1] + n[2] * ex[0][2]))
    return row, exact_row


def init_prism(tet, cfg: CutConfig) -> Polytope4:
    """
    Sweep a tetrahedron from d_min to d_max.

    Result: 8 vertices, 16 edges (6 floor, 6 roof, 4 vertical) and six
    bounding hyperplanes (floor, roof, four sides).

    Raises:
        PolytopeError: if the tetrahedron is degenerate
    """
    pts = np.asarray(tet, dtype=float)
    if pts.shape != (4, 3):
        raise PolytopeError("init_prism expects a (4, 3) tetrahedron")
    volume = np.dot(pts[1] - pts[0], np.cross(pts[2] - pts[0], pts[3] - pts[0]))
    if volume == 0 or not np.isfinite(volume):
        raise PolytopeError("Degenerate tetrahedron")
    poly = Polytope4(pts, cfg)
    d_lo, d_hi = Fraction(cfg.d_min), Fraction(cfg.d_max)
    poly._register(np.array([0.0, 0.0, 0.0, 1.0, -cfg.d_min]), (0, 0, 0, Fraction(1), -d_lo))
    poly._register(np.array([0.0, 0.0, 0.0, 1.0, -cfg.d_max]), (0, 0, 0, Fraction(1), -d_hi))
    for k in range(4):
        poly._register(*_side_row(pts, k))
    for level, d, d_exact in ((FLOOR, cfg.d_min, d_lo), (ROOF, cfg.d_max, d_hi)):
        for i in range(4):
            sides = tuple(SIDES[k] for k in range(4) if k != i)
            exact = tuple(Fraction(float(c)) for c in pts[i]) + (d_exact,) if cfg.exact else None
            encoding = tuple(sorted((level,) + sides)) if cfg.exact else None
            poly._add_vertex(np.append(pts[i], d), (level,) + sides, encoding, exact)
    floor_ids, roof_ids = [0, 1, 2, 3], [4, 5, 6, 7]
    for ids in (floor_ids, roof_ids):
        poly.edges.update(itertools.combinations(ids, 2))
    poly.edges.update((i, i + 4) for i in range(4))
    return poly


def polygon_area(points) -> float:
    """Area of a planar 3D polygon loop."""
    pts = np.asarray(points, dtype=float)
    rel = pts[1:] - pts[0]
    return 0.5 * float(np.linalg.norm(np.cross(rel[:-1], rel[1:]).sum(axis=0)))


def lower_envelope(poly: Polytope4) -> List[EnvelopeFacet]:
    """
    Bisector polygons of the lower envelope.

    Every 2-face shared by the cells of two field planes (neither of the
    six initial planes) is projected to 3D by dropping d. Polygons come in
    plane-pair order with loops normalised by face_loop. Faces with an area
    at or below epsilon * (tet diameter) are skipped in both backends; the
    float tolerance band collapses them anyway.
    """
    owners = set(poly.envelope_cells())
    floor = poly.cfg.epsilon * float(np.linalg.norm(np.ptp(poly.tet, axis=0)))
    facets = []
    seen: Set[FrozenSet[int]] = set()
    for (p, q), loop in poly.faces2.items():
        if p not in owners or q not in owners:
            continue
        key = frozenset(loop)
        if key in seen:
            continue
        seen.add(key)
        pts = np.array([poly.vertices[v].point3 for v in loop])
        if polygon_area(pts) <= floor:
            logger.debug(f"Skipping sliver face ({p}, {q})")
            continue
        tags = (poly.planes[p].field.tag, poly.planes[q].field.tag)
        facets.append(EnvelopeFacet(points=pts, planes=(p, q), tags=tags))
    return facets


def dump_polytope(poly: Polytope4) -> str:
    """Text dump of vertices, incidences and edges for golden fixtures."""
    lines = [
        f"# polytope backend={poly.cfg.backend} vertices={len(poly.vertices)} "
        f"edges={len(poly.edges)} planes={len(poly.planes)}"
    ]
    for pid, plane in sorted(poly.planes.items()):
        name = "initial" if plane.is_initial else str(plane.field.tag)
        coeffs = " ".join(f"{c:.12g}" for c in plane.row)
        lines.append(f"plane {pid} {name} {coeffs}")
    for vid, v in sorted(poly.vertices.items()):
        coords = " ".join(f"{c:.12g}" for c in v.point)
        planes = ",".join(str(p) for p in sorted(v.planes))
        lines.append(f"vertex {vid} {coords} planes {planes}")
    for a, b in sorted(poly.edges):
        lines.append(f"edge {a} {b}")
    return "\n".join(lines) + "\n"
