"""
Voronoi, medial-axis and offset pipelines.

Every tet is processed independently (seed, refine, extract the lower
envelope); results are merged by tet index, so the output does not depend
on the worker count or on the order in which tets finish.
"""

import logging
import math
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .constants import (
    DEFAULT_BACKEND,
    DEFAULT_EPSILON,
    DEFAULT_ORGANIC_DIHEDRAL,
    DEFAULT_ORGANIC_MIN_AREA,
    PRODUCTS,
    WELD_TOLERANCE,
    WINDING_INSIDE_THRESHOLD,
)
from .exceptions import ConfigurationError, InconsistentCutError
from .linear_field import MetricVariant
from .mesh_io import CellComplex, PatchedSurface, TetMesh, bbox_diagonal, weld_vertices
from .polytope4 import CutConfig, EnvelopeFacet, lower_envelope
from .propagation import DistanceOracle, mirror_offset, refine_tet, seed_tet, survival_filter_offset
from .spatial_index import WHOLE, build_bvh, nearest, nearest_many, winding_number

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrganicFilter:
    """Thresholds for removing the tiny medial structures of smooth patch transitions."""

    dihedral_threshold: float = DEFAULT_ORGANIC_DIHEDRAL
    min_facet_area: Optional[float] = None  # absolute; None means 1e-4 * diagonal**2

    def __post_init__(self):
        if not 0.0 <= self.dihedral_threshold <= 180.0:
            raise ConfigurationError(
                f"dihedral_threshold must be within [0, 180], got {self.dihedral_threshold}"
            )
        if self.min_facet_area is not None and self.min_facet_area < 0:
            raise ConfigurationError(f"min_facet_area must be >= 0, got {self.min_facet_area}")

    def area_floor(self, diagonal: float) -> float:
        if self.min_facet_area is not None:
            return self.min_facet_area
        return DEFAULT_ORGANIC_MIN_AREA * diagonal**2


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by the three products."""

    product: str = "voronoi"
    variant: MetricVariant = field(default_factory=MetricVariant)
    offset_distance: Optional[float] = None
    epsilon: float = DEFAULT_EPSILON
    backend: str = DEFAULT_BACKEND
    d_max: Optional[float] = None
    threads: int = 1
    weld: bool = True
    organic_filter: Optional[OrganicFilter] = None
    clip_to_interior: bool = False
    exact_fallback: bool = True

    def __post_init__(self):
        if self.product not in PRODUCTS:
            raise ConfigurationError(f"product must be one of {PRODUCTS}, got {self.product!r}")
        if self.product == "offset":
            if self.offset_distance is None or not self.offset_distance > 0:
                raise ConfigurationError(
                    f"offset requires a positive offset distance, got {self.offset_distance}"
                )
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        if self.d_max is not None and not math.isfinite(self.d_max):
            raise ConfigurationError(f"d_max must be finite, got {self.d_max}")
        # validates epsilon and backend
        CutConfig(epsilon=self.epsilon, backend=self.backend)


@dataclass
class RunStats:
    """Counters and timings collected by one pipeline run."""

    product: str = ""
    tets: int = 0
    active_tets: int = 0
    generator_histogram: Counter = field(default_factory=Counter)
    facets: int = 0
    cuts: int = 0
    queries: int = 0
    fallbacks: int = 0
    stage_seconds: Dict[str, float] = field(default_factory=dict)

    def timed(self, stage: str, start: float) -> None:
        self.stage_seconds[stage] = self.stage_seconds.get(stage, 0.0) + time.perf_counter() - start


@dataclass
class OffsetResult:
    inward: CellComplex
    outward: CellComplex


@dataclass
class TetResult:
    index: int
    facets: List[EnvelopeFacet]
    discovered: int
    cuts: int
    queries: int
    active: bool = True
    fallback: bool = False


def cut_bounds(
    surface: PatchedSurface, mesh: TetMesh, cfg: PipelineConfig
) -> Tuple[float, float]:
    """
    Floor and roof of the prisms, shared by every tet of the run.

    The roof sits at 2 * (largest value any field can take) + L and the floor
    below the smallest, where L is the diagonal of the joint bounding box of
    the surface and the domain. The floor always sits strictly below every
    field, so a field that is identically 0 (a tet whose corners all lie on
    one bent patch) still cuts the prism.
    """
    L = bbox_diagonal(np.vstack([surface.vertices, mesh.vertices]))
    variant = cfg.variant
    patches = surface.generator_patches
    ceiling = max(variant.transform(L, p) for p in patches)
    floor = min(variant.transform(0.0, p) for p in patches)
    if cfg.product == "offset":
        ceiling = max(ceiling, 2.0 * cfg.offset_distance)
        floor = min(floor, 2.0 * cfg.offset_distance - L)
    d_min = min(floor, 0.0) - L
    d_max = cfg.d_max if cfg.d_max is not None else 2.0 * max(ceiling, 0.0) + L
    if not d_max > d_min:
        raise ConfigurationError(f"d_max ({d_max}) must exceed the prism floor ({d_min})")
    return d_min, d_max


def _solve_tet(
    index: int,
    mesh: TetMesh,
    oracle: DistanceOracle,
    cut_cfg: CutConfig,
    offset: Optional[float],
) -> TetResult:
    keys = tuple(int(k) for k in mesh.tets[index])
    state = seed_tet(mesh.tet_points(index), oracle, cut_cfg, index=index, keys=keys)
    refine_tet(state, oracle)
    poly = state.polytope
    cuts, discovered = poly.cut_count, len(state.discovered)
    if offset is not None:
        survival_filter_offset(state, oracle, offset)
        if not state.active:
            return TetResult(index, [], discovered, cuts, state.queries, active=False)
        poly = mirror_offset(state, oracle, cut_cfg, offset)
        cuts += poly.cut_count
    return TetResult(index, lower_envelope(poly), discovered, cuts, state.queries)


def process_tet(
    index: int,
    mesh: TetMesh,
    oracle: DistanceOracle,
    cut_cfg: CutConfig,
    offset: Optional[float] = None,
    exact_fallback: bool = True,
) -> TetResult:
    """
    Envelope facets of one tet, recomputed in exact mode if the float cut fails.

    Raises:
        InconsistentCutError: float mode without fallback
    """
    try:
        return _solve_tet(index, mesh, oracle, cut_cfg, offset)
    except InconsistentCutError as e:
        e.tet = index
        if cut_cfg.exact or not exact_fallback:
            logger.error(f"tet {index}: {e}")
            raise
        logger.warning(f"tet {index}: float cut inconsistent, recomputing in exact mode")
    result = _solve_tet(index, mesh, oracle, replace(cut_cfg, backend="exact"), offset)
    result.fallback = True
    return result


# per-process state installed by _init_worker
_WORKER: Dict[str, object] = {}


def _init_worker(
    mesh: TetMesh,
    oracle: DistanceOracle,
    cut_cfg: CutConfig,
    offset: Optional[float],
    exact_fallback: bool,
) -> None:
    _WORKER.update(
        mesh=mesh, oracle=oracle, cut_cfg=cut_cfg, offset=offset, exact_fallback=exact_fallback
    )


def _worker_tet(index: int) -> TetResult:
    w = _WORKER
    return process_tet(
        index, w["mesh"], w["oracle"], w["cut_cfg"], w["offset"], w["exact_fallback"]
    )


def run_tets(
    mesh: TetMesh,
    indices: Sequence[int],
    oracle: DistanceOracle,
    cut_cfg: CutConfig,
    cfg: PipelineConfig,
    stats: RunStats,
) -> Dict[int, TetResult]:
    """
    Process tets, results keyed by tet index.

    With threads == 1 everything runs in the calling process. Otherwise the
    tets are spread over that many worker processes, each holding its own
    copy of the mesh and the distance oracle; the per-tet work is Python
    bound, so threads would serialise on the interpreter lock.
    """
    offset = cfg.offset_distance if cfg.product == "offset" else None

    start = time.perf_counter()
    if cfg.threads == 1 or len(indices) < 2:
        results = [
            process_tet(i, mesh, oracle, cut_cfg, offset, cfg.exact_fallback) for i in indices
        ]
    else:
        workers = min(cfg.threads, len(indices))
        chunksize = max(1, len(indices) // (4 * workers))
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(mesh, oracle, cut_cfg, offset, cfg.exact_fallback),
        ) as executor:
            results = list(executor.map(_worker_tet, indices, chunksize=chunksize))
    stats.timed("propagate", start)

    by_index = {r.index: r for r in results}
    stats.tets += len(indices)
    for r in results:
        stats.active_tets += int(r.active)
        stats.generator_histogram[r.discovered] += 1
        stats.cuts += r.cuts
        stats.queries += r.queries
        stats.fallbacks += int(r.fallback)
    logger.info(
        f"Processed tets={len(indices)} active={stats.active_tets} "
        f"fallbacks={stats.fallbacks} seconds={stats.stage_seconds['propagate']:.3f}"
    )
    return by_index


def assemble(
    facets: Mapping[int, Iterable[EnvelopeFacet]],
    weld: bool = True,
    tolerance: Optional[float] = None,
) -> CellComplex:
    """
    Concatenate per-tet facets in increasing tet index.

    Args:
        facets: Envelope facets keyed by tet index
        weld: Merge coincident vertices (see weld_vertices)
        tolerance: Weld distance; defaults to 1e-9 * bbox diagonal
    """
    vertices: List[np.ndarray] = []
    polygons, labels, tets = [], [], []
    count = 0
    for index in sorted(facets):
        for facet in facets[index]:
            n = len(facet.points)
            vertices.append(np.asarray(facet.points, dtype=float))
            polygons.append(tuple(range(count, count + n)))
            labels.append(tuple(sorted(facet.tags)))
            tets.append(index)
            count += n
    cc = CellComplex(
        vertices=np.vstack(vertices) if vertices else np.zeros((0, 3)),
        polygons=polygons,
        polygon_labels=labels,
        source_tet=tets,
    )
    return weld_vertices(cc, tolerance) if weld else cc


def _prepare(
    surface: PatchedSurface, mesh: TetMesh, cfg: PipelineConfig, stats: RunStats
) -> Tuple[DistanceOracle, CutConfig, float]:
    start = time.perf_counter()
    oracle = DistanceOracle(surface, cfg.variant)
    d_min, d_max = cut_bounds(surface, mesh, cfg)
    cut_cfg = CutConfig(epsilon=cfg.epsilon, backend=cfg.backend, d_max=d_max, d_min=d_min)
    stats.timed("index", start)
    stats.product = cfg.product
    logger.info(f"Cut bounds d_min={d_min:.6g} d_max={d_max:.6g}")
    weld_tol = WELD_TOLERANCE * bbox_diagonal(np.vstack([surface.vertices, mesh.vertices]))
    return oracle, cut_cfg, weld_tol


def _interior_tets(surface: PatchedSurface, mesh: TetMesh) -> List[int]:
    centroids = mesh.vertices[mesh.tets].mean(axis=1)
    inside = winding_number(surface, centroids) >= WINDING_INSIDE_THRESHOLD
    return np.flatnonzero(inside).tolist()


def compute_voronoi(
    surface: PatchedSurface,
    mesh: TetMesh,
    cfg: Optional[PipelineConfig] = None,
    stats: Optional[RunStats] = None,
    indices: Optional[Sequence[int]] = None,
) -> CellComplex:
    """
    Patch Voronoi diagram restricted to the tet mesh.

    Args:
        surface: Generator surface
        mesh: Tet domain
        cfg: Pipeline configuration
        stats: Filled in place when given
        indices: Subset of tets to process (default all)

    Returns:
        CellComplex of bisector polygons labelled by real generator pairs
    """
    cfg = cfg or PipelineConfig()
    stats = stats if stats is not None else RunStats()
    oracle, cut_cfg, weld_tol = _prepare(surface, mesh, cfg, stats)
    indices = list(range(len(mesh))) if indices is None else list(indices)
    results = run_tets(mesh, indices, oracle, cut_cfg, cfg, stats)
    start = time.perf_counter()
    cc = assemble({i: r.facets for i, r in results.items()}, weld=cfg.weld, tolerance=weld_tol)
    stats.timed("assemble", start)
    stats.facets = len(cc)
    logger.info(f"Voronoi facets={len(cc)}")
    return cc


def compute_medial_axis(
    surface: PatchedSurface,
    mesh: TetMesh,
    cfg: Optional[PipelineConfig] = None,
    stats: Optional[RunStats] = None,
) -> CellComplex:
    """
    Medial axis as the patch Voronoi diagram inside the surface.

    The tets are taken to tessellate the interior unless clip_to_interior
    is set, in which case tets whose centroid winding number is below 0.5
    are skipped. Facets lying on the input surface are dropped and the
    organic filter runs when configured.
    """
    cfg = cfg or PipelineConfig(product="medial-axis")
    stats = stats if stats is not None else RunStats()
    indices = _interior_tets(surface, mesh) if cfg.clip_to_interior else None
    if indices is not None:
        logger.info(f"Interior clipping kept {len(indices)} of {len(mesh)} tets")
    cc = compute_voronoi(surface, mesh, cfg, stats, indices)

    start = time.perf_counter()
    whole = build_bvh(surface, WHOLE)
    tol = cfg.epsilon * max(1.0, surface.diagonal)
    keep = []
    for idx in range(len(cc)):
        dists = [hit.distance for hit in nearest_many(whole, cc.polygon_points(idx))]
        if max(dists) > tol:
            keep.append(idx)
    if len(keep) < len(cc):
        logger.debug(f"Dropped {len(cc) - len(keep)} facets lying on the surface")
        cc = cc.subset(keep)
    if cfg.organic_filter is not None:
        cc = filter_organic(cc, surface, cfg.organic_filter)
    stats.timed("filter", start)
    stats.facets = len(cc)
    logger.info(f"Medial axis facets={len(cc)}")
    return cc


def polygon_components(cc: CellComplex, tolerance: float = 0.0) -> np.ndarray:
    """Connected-component id of every polygon; vertices closer than tolerance count as shared."""
    n = len(cc.vertices)
    if len(cc) == 0:
        return np.zeros(0, dtype=np.int64)
    rows, cols = [], []
    for loop in cc.polygons:
        rows.extend(loop)
        cols.extend(loop[1:] + loop[:1])
    if tolerance > 0:
        for i, j in sorted(cKDTree(cc.vertices).query_pairs(tolerance)):
            rows.append(i)
            cols.append(j)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return np.array([labels[loop[0]] for loop in cc.polygons])


def compute_offset(
    surface: PatchedSurface,
    mesh: TetMesh,
    cfg: PipelineConfig,
    stats: Optional[RunStats] = None,
) -> OffsetResult:
    """
    Offset surfaces at distance d, split into inward and outward layers.

    Each tet keeps the generators whose corner distances straddle d, adds a
    mirrored field 2d - D per survivor, and emits the (real, virtual)
    envelope facets. A connected component is inward when most of its
    polygons lie on the inner side of their nearest surface triangle.

    Facets pair the nearest real generator with the farthest surviving
    virtual one. Where those differ (a cross pair, near a patch Voronoi
    boundary) the layer can stray from d by up to twice the tet's
    linearization_error_bound; same-patch facets stay within one bound.
    """
    if cfg.product != "offset":
        raise ConfigurationError("compute_offset needs a PipelineConfig with product='offset'")
    stats = stats if stats is not None else RunStats()
    oracle, cut_cfg, weld_tol = _prepare(surface, mesh, cfg, stats)
    results = run_tets(mesh, list(range(len(mesh))), oracle, cut_cfg, cfg, stats)

    start = time.perf_counter()
    facets = {
        i: [f for f in r.facets if sum(t.is_virtual for t in f.tags) == 1]
        for i, r in results.items()
    }
    cross = sum(f.tags[0].patch != f.tags[1].patch for kept in facets.values() for f in kept)
    if cross:
        logger.info(
            f"Offset has {cross} cross-patch facets; "
            "they may stray from d by twice the linearization bound"
        )
    cc = assemble(facets, weld=cfg.weld, tolerance=weld_tol)
    stats.timed("assemble", start)
    if len(cc) == 0:
        logger.warning(
            f"Offset at d={cfg.offset_distance} produced no facets; the domain may not extend past d"
        )
        return OffsetResult(inward=CellComplex(), outward=CellComplex())

    start = time.perf_counter()
    components = polygon_components(cc, weld_tol)
    votes: Dict[int, int] = defaultdict(int)
    for idx, comp in enumerate(components.tolist()):
        centre = cc.polygon_points(idx).mean(axis=0)
        hit = nearest(oracle.whole, centre)
        side = float((centre - hit.point) @ surface.normals[hit.triangle])
        votes[comp] += -1 if side < 0 else 1
    inward_ids = {comp for comp, vote in votes.items() if vote < 0}
    inward = [i for i, comp in enumerate(components.tolist()) if comp in inward_ids]
    outward = [i for i, comp in enumerate(components.tolist()) if comp not in inward_ids]
    stats.timed("split", start)
    stats.facets = len(cc)
    logger.info(
        f"Offset facets={len(cc)} components={len(votes)} inward={len(inward)} outward={len(outward)}"
    )
    return OffsetResult(inward=cc.subset(inward), outward=cc.subset(outward))


def patch_dihedrals(surface: PatchedSurface) -> Dict[Tuple[int, int], float]:
    """
    Mean dihedral angle (degrees) along the shared edges of adjacent patches.

    180 means a flat transition; a cube edge gives 90.
    """
    edge_tris: Dict[Tuple[int, int], List[int]] = defaultdict(list)
    for t, tri in enumerate(surface.triangles.tolist()):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edge_tris[(min(a, b), max(a, b))].append(t)
    sums: Dict[Tuple[int, int], List[float]] = defaultdict(list)
    normals = surface.normals
    for tris in edge_tris.values():
        for t1, t2 in zip(tris, tris[1:]):
            p1, p2 = int(surface.patch_of_triangle[t1]), int(surface.patch_of_triangle[t2])
            if p1 == p2:
                continue
            cos = float(np.clip(normals[t1] @ normals[t2], -1.0, 1.0))
            sums[(min(p1, p2), max(p1, p2))].append(180.0 - math.degrees(math.acos(cos)))
    return {pair: float(np.mean(v)) for pair, v in sorted(sums.items())}


def filter_organic(
    cc: CellComplex, surface: PatchedSurface, thresholds: OrganicFilter
) -> CellComplex:
    """
    Remove medial structure produced by smooth patch transitions.

    Drops polygons labelled by two adjacent patches whose mean dihedral
    angle is at least the threshold (a threshold of 0 disables this step),
    then every connected component whose total area is below the area floor.
    """
    keep = list(range(len(cc)))
    if thresholds.dihedral_threshold > 0:
        smooth = {
            pair
            for pair, angle in patch_dihedrals(surface).items()
            if angle >= thresholds.dihedral_threshold
        }
        keep = [
            i
            for i in keep
            if tuple(sorted(t.patch for t in cc.polygon_labels[i])) not in smooth
        ]
        logger.debug(f"Organic filter: {len(cc) - len(keep)} smooth-transition facets removed")
    filtered = cc.subset(keep)

    floor = thresholds.area_floor(surface.diagonal)
    if floor <= 0 or len(filtered) == 0:
        return filtered
    components = polygon_components(filtered, WELD_TOLERANCE * surface.diagonal)
    areas: Dict[int, float] = defaultdict(float)
    for idx, comp in enumerate(components.tolist()):
        areas[comp] += filtered.polygon_area(idx)
    small = {comp for comp, area in areas.items() if area < floor}
    if small:
        logger.debug(f"Organic filter: {len(small)} components below area {floor:.3e} removed")
    return filtered.subset([i for i, comp in enumerate(components.tolist()) if comp not in small])


def compute(
    surface: PatchedSurface,
    mesh: TetMesh,
    cfg: PipelineConfig,
    stats: Optional[RunStats] = None,
):
    """Dispatch on cfg.product."""
    if cfg.product == "voronoi":
        return compute_voronoi(surface, mesh, cfg, stats)
    if cfg.product == "medial-axis":
        return compute_medial_axis(surface, mesh, cfg, stats)
    return compute_offset(surface, mesh, cfg, stats)
