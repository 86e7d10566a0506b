"""
Bounding volume hierarchies and exact nearest-point queries.

One BVH is built over the whole generator surface and one per patch.
Queries return the exact closest point (region classification over the
triangle's vertex, edge and face regions), ties broken by the lowest
triangle index.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import List, Union

import numpy as np

from .constants import BVH_LEAF_SIZE, ERROR_EMPTY_SCOPE, NEAREST_TIE_TOLERANCE
from .exceptions import SpatialIndexError
from .mesh_io import PatchedSurface

logger = logging.getLogger(__name__)

WHOLE = "whole"


@dataclass(frozen=True)
class NearestHit:
    """Closest surface point to a query."""

    point: np.ndarray
    distance: float
    patch: int
    triangle: int


@dataclass(frozen=True, eq=False)
class Bvh:
    """
    Binary AABB tree over a subset of surface triangles.

    Node arrays are flat; node 0 is the root. Leaves (left == -1) own the
    slice order[start:start + count] of triangle indices.
    """

    surface: PatchedSurface
    scope: Union[str, int]
    order: np.ndarray
    box_min: np.ndarray
    box_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray

    @property
    def triangles(self) -> np.ndarray:
        return self.order

    def leaves(self) -> List[np.ndarray]:
        return [
            self.order[self.start[n] : self.start[n] + self.count[n]]
            for n in range(len(self.left))
            if self.left[n] < 0
        ]


def closest_points_on_triangles(p, a, b, c) -> np.ndarray:
    """
    Exact closest point on each triangle (a[i], b[i], c[i]) to p.

    Args:
        p: (3,) query point or (n, 3) one point per triangle
        a, b, c: (n, 3) triangle corners

    Returns:
        (n, 3) closest points
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), a.shape)
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    def assign(mask, value):
        mask = mask & ~done
        if mask.any():
            out[mask] = value[mask] if value.ndim == 2 else value
            done[mask] = True
        return mask

    assign((d1 <= 0) & (d2 <= 0), a)
    assign((d3 >= 0) & (d4 <= d3), b)
    assign((d6 >= 0) & (d5 <= d6), c)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        w = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        assign(~done, a + v[:, None] * ab + w[:, None] * ac)
    return out


def _scope_triangles(surface: PatchedSurface, scope) -> np.ndarray:
    if scope == WHOLE:
        mask = ~np.isin(surface.patch_of_triangle, sorted(surface.excluded_patches))
        tris = np.flatnonzero(mask)
    else:
        try:
            patch = int(scope)
        except (TypeError, ValueError):
            raise SpatialIndexError(f"Unknown BVH scope {scope!r}")
        if not 0 <= patch < surface.patch_count:
            raise SpatialIndexError(
                f"Patch {patch} out of range (surface has {surface.patch_count} patches)"
            )
        tris = np.array(surface.patches[patch], dtype=np.int64)
    if len(tris) == 0:
        raise SpatialIndexError(f"{ERROR_EMPTY_SCOPE}: {scope}")
    return tris


def build_bvh(surface: PatchedSurface, scope: Union[str, int] = WHOLE) -> Bvh:
    """
    Build a BVH by median split on the longest centroid axis.

    Args:
        surface: Patched surface
        scope: "whole" (all non-excluded triangles) or a patch id

    Raises:
        SpatialIndexError: if the scope is unknown or empty
    """
    tris = _scope_triangles(surface, scope)
    corners = surface.corners
    tri_min = corners.min(axis=1)
    tri_max = corners.max(axis=1)
    centroids = corners.mean(axis=1)

    order = tris.copy()
    box_min, box_max, left, right, start, count = [], [], [], [], [], []

    def new_node(lo, hi):
        idx = order[lo:hi]
        box_min.append(tri_min[idx].min(axis=0))
        box_max.append(tri_max[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        return len(left) - 1

    root = new_node(0, len(order))
    stack = [(root, 0, len(order))]
    while stack:
        node, lo, hi = stack.pop()
        if hi - lo <= BVH_LEAF_SIZE:
            continue
        idx = order[lo:hi]
        spread = centroids[idx].max(axis=0) - centroids[idx].min(axis=0)
        axis = int(np.argmax(spread))
        # stable sort keeps equal centroids in triangle-index order
        ranked = np.lexsort((idx, centroids[idx, axis]))
        order[lo:hi] = idx[ranked]
        mid = (lo + hi) // 2
        left[node] = new_node(lo, mid)
        right[node] = new_node(mid, hi)
        count[node] = 0
        stack.append((right[node], mid, hi))
        stack.append((left[node], lo, mid))

    bvh = Bvh(
        surface=surface,
        scope=scope,
        order=order,
        box_min=np.array(box_min),
        box_max=np.array(box_max),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        count=np.array(count, dtype=np.int64),
    )
    logger.debug(f"Built BVH scope={scope} triangles={len(order)} nodes={len(left)}")
    return bvh


def _box_distance(bvh: Bvh, node: int, q: np.ndarray) -> float:
    delta = np.maximum(np.maximum(bvh.box_min[node] - q, q - bvh.box_max[node]), 0.0)
    return math.sqrt(float(delta @ delta))


def nearest(bvh: Bvh, q) -> NearestHit:
    """
    Exact closest point on the BVH's triangles to q.

    Among triangles whose distances agree within 1e-12, the lowest triangle
    index wins.
    """
    q = np.asarray(q, dtype=float)
    corners = bvh.surface.corners
    best_d = math.inf
    best_tri = -1
    best_point = None
    heap = [(0.0, 0)]
    while heap:
        box_d, node = heapq.heappop(heap)
        if box_d > best_d + NEAREST_TIE_TOLERANCE:
            break
        if bvh.left[node] < 0:
            idx = bvh.order[bvh.start[node] : bvh.start[node] + bvh.count[node]]
            c = corners[idx]
            pts = closest_points_on_triangles(q, c[:, 0], c[:, 1], c[:, 2])
            diff = pts - q
            dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            for k, d in enumerate(dists.tolist()):
                tri = int(idx[k])
                closer = d < best_d - NEAREST_TIE_TOLERANCE
                tied = abs(d - best_d) <= NEAREST_TIE_TOLERANCE and tri < best_tri
                if best_tri < 0 or closer or tied:
                    best_d, best_tri, best_point = d, tri, pts[k]
            continue
        for child in (bvh.left[node], bvh.right[node]):
            heapq.heappush(heap, (_box_distance(bvh, child, q), int(child)))
    point = np.array(best_point)
    return NearestHit(
        point=point,
        distance=float(np.linalg.norm(point - q)),
        patch=int(bvh.surface.patch_of_triangle[best_tri]),
        triangle=best_tri,
    )


def nearest_many(bvh: Bvh, points) -> List[NearestHit]:
    """Nearest hits for a (n, 3) array of query points, in order."""
    return [nearest(bvh, q) for q in np.asarray(points, dtype=float).reshape(-1, 3)]


def winding_number(surface: PatchedSurface, points, chunk: int = 256) -> np.ndarray:
    """
    Generalized winding number of the (outward oriented) surface at each point.

    Close to 1 inside a closed surface, 0 outside. Uses the signed solid
    angle of every triangle.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    corners = surface.corners
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        block = pts[lo : lo + chunk]
        rel = corners[None, :, :, :] - block[:, None, None, :]
        a, b, c = rel[:, :, 0], rel[:, :, 1], rel[:, :, 2]
        la, lb, lc = (np.linalg.norm(x, axis=-1) for x in (a, b, c))
        det = np.einsum("pti,pti->pt", a, np.cross(b, c))
        denom = (
            la * lb * lc
            + np.einsum("pti,pti->pt", a, b) * lc
            + np.einsum("pti,pti->pt", b, c) * la
            + np.einsum("pti,pti->pt", c, a) * lb
        )
        out[lo : lo + chunk] = (2.0 * np.arctan2(det, denom)).sum(axis=1) / (4.0 * math.pi)
    return out
