"""
patchvoronoi: Voronoi diagrams of surface patches on tetrahedral meshes.

The package computes the Voronoi diagram of a patched triangle surface
restricted to a tet mesh, by cutting one 4D prism per tet with the linear
distance field of every nearby patch and keeping the lower envelope. The
medial axis and offset surfaces of the model follow from it.

Example:
    ```python
    from patchvoronoi import (
        PipelineConfig,
        compute_medial_axis,
        load_patched_surface,
        load_tet_mesh,
        write_cell_complex,
    )

    surface = load_patched_surface("cube.obj")
    mesh = load_tet_mesh("cube.msh")

    # Medial axis on four worker processes
    cc = compute_medial_axis(surface, mesh, PipelineConfig(product="medial-axis", threads=4))
    write_cell_complex(cc, "cube_ma.obj")
    ```

Offsets are split into inward and outward layers:
    ```python
    cfg = PipelineConfig(product="offset", offset_distance=0.1)
    result = compute_offset(surface, mesh, cfg)
    print(len(result.inward), len(result.outward))
    ```
"""

import logging

__version__ = "0.1.0"

_logger = logging.getLogger(__name__)


def enable_debug(level=logging.DEBUG):
    """
    Send the package's log records to stderr.

    Args:
        level: Logging level (default: logging.DEBUG)
    """
    if not any(getattr(h, "_patchvoronoi", False) for h in _logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        handler._patchvoronoi = True
        _logger.addHandler(handler)
    _logger.setLevel(level)
    _logger.debug("Debug logging enabled")


from .exceptions import (  # noqa: E402
    ConfigurationError,
    FieldError,
    InconsistentCutError,
    InvalidWeightError,
    MeshFormatError,
    MeshValidationError,
    PatchVoronoiError,
    PolytopeError,
    PropagationError,
    SpatialIndexError,
)
from .linear_field import (  # noqa: E402
    GeneratorTag,
    Hyperplane4,
    MetricVariant,
    bisector_plane,
    fit_hyperplane,
    linearization_error_bound,
    transform_distance,
)
from .mesh_io import (  # noqa: E402
    CellComplex,
    PatchedSurface,
    TetMesh,
    load_patched_surface,
    load_tet_mesh,
    make_tet_mesh,
    read_cell_complex,
    structured_tet_grid,
    weld_vertices,
    write_cell_complex,
    write_tet_mesh,
)
from .pipeline import (  # noqa: E402
    OffsetResult,
    OrganicFilter,
    PipelineConfig,
    RunStats,
    assemble,
    compute_medial_axis,
    compute_offset,
    compute_voronoi,
    filter_organic,
)
from .polytope4 import (  # noqa: E402
    CutConfig,
    Polytope4,
    SideClassification,
    classify,
    dump_polytope,
    edge_hyperplane_intersection,
    exact_side,
    init_prism,
    lower_envelope,
)
from .propagation import DistanceOracle, TetState, refine_tet, seed_tet, survival_filter_offset  # noqa: E402
from .spatial_index import build_bvh, nearest, winding_number  # noqa: E402

__all__ = [
    "enable_debug",
    "PatchVoronoiError",
    "MeshFormatError",
    "MeshValidationError",
    "SpatialIndexError",
    "FieldError",
    "InvalidWeightError",
    "PolytopeError",
    "InconsistentCutError",
    "PropagationError",
    "ConfigurationError",
    "GeneratorTag",
    "Hyperplane4",
    "MetricVariant",
    "transform_distance",
    "fit_hyperplane",
    "bisector_plane",
    "linearization_error_bound",
    "PatchedSurface",
    "TetMesh",
    "CellComplex",
    "load_patched_surface",
    "load_tet_mesh",
    "make_tet_mesh",
    "write_cell_complex",
    "read_cell_complex",
    "write_tet_mesh",
    "structured_tet_grid",
    "weld_vertices",
    "build_bvh",
    "nearest",
    "winding_number",
    "CutConfig",
    "Polytope4",
    "SideClassification",
    "init_prism",
    "classify",
    "edge_hyperplane_intersection",
    "exact_side",
    "lower_envelope",
    "dump_polytope",
    "DistanceOracle",
    "TetState",
    "seed_tet",
    "refine_tet",
    "survival_filter_offset",
    "PipelineConfig",
    "OrganicFilter",
    "OffsetResult",
    "RunStats",
    "compute_voronoi",
    "compute_medial_axis",
    "compute_offset",
    "assemble",
    "filter_organic",
]
