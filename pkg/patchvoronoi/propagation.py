"""
Per-tetrahedron generator discovery.

Each tet starts with the fields of the patches nearest to its four corners.
Polytope vertices are then taken from a FIFO queue; if the patch nearest to
a vertex (projected to 3D) has not been inserted yet, its field is fitted
and cut in, and the vertices that cut created join the queue. The process
stops when the queue is empty, i.e. every vertex of the envelope is owned
by an inserted generator.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Deque, Dict, List, Optional, Sequence

import numpy as np

from .constants import ERROR_NON_TERMINATION, NEAREST_TIE_TOLERANCE
from .exceptions import PropagationError
from .linear_field import GeneratorTag, Hyperplane4, MetricVariant, fit_hyperplane, transform_distance
from .mesh_io import PatchedSurface
from .polytope4 import CutConfig, Polytope4, init_prism
from .spatial_index import WHOLE, Bvh, build_bvh, nearest

logger = logging.getLogger(__name__)


class DistanceOracle:
    """
    Nearest-generator and per-patch distance queries with a vertex cache.

    Read-only once built apart from the caches, whose entries are
    deterministic. Worker processes each get their own copy, so cache
    contents never change a result.
    """

    def __init__(self, surface: PatchedSurface, variant: Optional[MetricVariant] = None):
        self.surface = surface
        self.variant = variant or MetricVariant()
        self.whole: Bvh = build_bvh(surface, WHOLE)
        self.per_patch: Dict[int, Bvh] = {p: build_bvh(surface, p) for p in surface.generator_patches}
        self._distances: Dict[tuple, float] = {}
        self._owners: Dict[int, int] = {}
        logger.info(
            f"Distance oracle ready: variant={self.variant.kind} generators={len(self.per_patch)}"
        )

    @property
    def generator_count(self) -> int:
        return len(self.per_patch)

    def distance(self, patch: int, q, key: Optional[int] = None) -> float:
        """Euclidean distance from q to a patch; cached when q is mesh vertex `key`."""
        if key is not None:
            cached = self._distances.get((key, patch))
            if cached is not None:
                return cached
        value = nearest(self.per_patch[patch], q).distance
        if key is not None:
            self._distances[(key, patch)] = value
        return value

    def nearest_generator(self, q, key: Optional[int] = None) -> int:
        """
        Patch minimising the variant's transformed distance at q.

        VD uses the whole-surface BVH directly; the weighted variants compare
        every generator's transformed distance (ties go to the lowest id).
        """
        if key is not None and key in self._owners:
            return self._owners[key]
        if self.variant.kind == "vd":
            owner = nearest(self.whole, q).patch
        else:
            owner, best = -1, math.inf
            for patch in sorted(self.per_patch):
                value = self.variant.transform(self.distance(patch, q, key), patch)
                if value < best - NEAREST_TIE_TOLERANCE:
                    owner, best = patch, value
        if key is not None:
            self._owners[key] = owner
        return owner

    def fit(
        self,
        tag: GeneratorTag,
        tet: np.ndarray,
        keys: Optional[Sequence[int]] = None,
        exact: bool = False,
        offset: Optional[float] = None,
    ) -> Hyperplane4:
        """Fit the field of a real generator, or of its mirror at 2d - D."""
        keys = keys if keys is not None else [None] * 4
        raw = [self.distance(tag.patch, q, k) for q, k in zip(tet, keys)]
        if tag.is_virtual:
            if offset is None:
                raise PropagationError("Virtual generators need an offset distance")
            if exact:
                values = [2 * Fraction(offset) - Fraction(d) for d in raw]
            else:
                values = [2.0 * offset - d for d in raw]
        elif exact:
            weight = Fraction(self.variant.weight(tag.patch))
            values = [transform_distance(Fraction(d), weight, self.variant) for d in raw]
        else:
            values = [self.variant.transform(d, tag.patch) for d in raw]
        return fit_hyperplane(tet, values, tag, exact=exact)


@dataclass
class TetState:
    """Working state of one tet: polytope, discovered generators, vertex queue."""

    index: int
    tet: np.ndarray
    polytope: Polytope4
    keys: Optional[Sequence[int]] = None
    discovered: Dict[GeneratorTag, Hyperplane4] = field(default_factory=dict)
    pending: Deque[int] = field(default_factory=deque)
    survivors: List[int] = field(default_factory=list)
    active: bool = True
    queries: int = 0

    @property
    def exact(self) -> bool:
        return self.polytope.cfg.exact


def insert_generator(state: TetState, oracle: DistanceOracle, tag: GeneratorTag, offset: Optional[float] = None) -> List[int]:
    """Fit a generator's field, cut it in and queue the new vertices."""
    h = oracle.fit(tag, state.tet, state.keys, exact=state.exact, offset=offset)
    created = state.polytope.cut(h)
    state.discovered[tag] = h
    state.pending.extend(created)
    logger.debug(f"tet {state.index}: inserted {tag}, {len(created)} new vertices")
    return created


def seed_tet(
    tet,
    oracle: DistanceOracle,
    cfg: CutConfig,
    index: int = 0,
    keys: Optional[Sequence[int]] = None,
) -> TetState:
    """
    Build the prism and insert the generators nearest to the four corners.

    Args:
        tet: (4, 3) corner coordinates
        oracle: Distance oracle over the surface
        cfg: Cutting configuration
        index: Tet index (for diagnostics and merging)
        keys: Mesh vertex ids of the corners, enabling the vertex caches

    Returns:
        TetState whose queue holds every vertex lying on an inserted field
    """
    pts = np.asarray(tet, dtype=float)
    state = TetState(index=index, tet=pts, polytope=init_prism(pts, cfg), keys=keys)
    corner_keys = keys if keys is not None else [None] * 4
    owners = sorted({oracle.nearest_generator(q, k) for q, k in zip(pts, corner_keys)})
    for patch in owners:
        insert_generator(state, oracle, GeneratorTag.real(patch))
    poly = state.polytope
    field_planes = set(poly.fields)
    state.pending = deque(vid for vid, v in sorted(poly.vertices.items()) if v.planes & field_planes)
    return state


def refine_tet(state: TetState, oracle: DistanceOracle) -> TetState:
    """
    Run the vertex queue until no vertex has an undiscovered nearest generator.

    Raises:
        PropagationError: if more generators are discovered than exist
    """
    poly = state.polytope
    limit = oracle.generator_count
    while state.pending:
        vid = state.pending.popleft()
        vertex = poly.vertices.get(vid)
        if vertex is None:
            continue
        state.queries += 1
        tag = GeneratorTag.real(oracle.nearest_generator(vertex.point3))
        if tag in state.discovered:
            continue
        if len(state.discovered) >= limit:
            logger.error(f"tet {state.index}: discovered {len(state.discovered)} of {limit} generators")
            raise PropagationError(f"{ERROR_NON_TERMINATION}: tet {state.index}")
        insert_generator(state, oracle, tag)
    return state


def survival_filter_offset(state: TetState, oracle: DistanceOracle, d: float) -> TetState:
    """
    Keep the generators whose corner distances straddle the offset distance.

    A generator survives when it owns an envelope cell and
    min_j D(s, v_j) <= d <= max_j D(s, v_j). A tet left without survivors is
    marked inactive and contributes nothing to the offset.
    """
    keys = state.keys if state.keys is not None else [None] * 4
    survivors = []
    for tag in state.polytope.surviving_fields():
        corner = [oracle.distance(tag.patch, q, k) for q, k in zip(state.tet, keys)]
        if min(corner) <= d <= max(corner):
            survivors.append(tag.patch)
    state.survivors = sorted(survivors)
    state.active = bool(state.survivors)
    return state


def mirror_offset(state: TetState, oracle: DistanceOracle, cfg: CutConfig, d: float) -> Polytope4:
    """Fresh polytope holding the survivors' real fields and their mirrors at 2d - D."""
    mirrored = TetState(index=state.index, tet=state.tet, polytope=init_prism(state.tet, cfg), keys=state.keys)
    for patch in state.survivors:
        insert_generator(mirrored, oracle, GeneratorTag.real(patch))
    for patch in state.survivors:
        insert_generator(mirrored, oracle, GeneratorTag.virtual(patch), offset=d)
    return mirrored.polytope
