"""
Constants for the patchvoronoi kernel.
"""

# Cutting settings
DEFAULT_EPSILON = 1e-9
DEFAULT_BACKEND = "float"
BACKENDS = ("float", "exact")

# Degeneracy floors, relative to the bounding-box diagonal
TRIANGLE_AREA_FLOOR = 1e-12  # times diagonal**2
TET_VOLUME_FLOOR = 1e-14  # times diagonal**3
WELD_TOLERANCE = 1e-9  # times diagonal

# nearest() tie-break window (absolute)
NEAREST_TIE_TOLERANCE = 1e-12
BVH_LEAF_SIZE = 4

# Organic filter defaults
DEFAULT_ORGANIC_DIHEDRAL = 170.0  # degrees
DEFAULT_ORGANIC_MIN_AREA = 1e-4  # times diagonal**2

# Interior clipping
WINDING_INSIDE_THRESHOLD = 0.5

# Products and variants
PRODUCTS = ("voronoi", "medial-axis", "offset")
VARIANTS = ("vd", "pd", "awvd", "mwvd")
OUTPUT_FORMATS = ("obj", "ply")

# Environment
THREADS_ENV_VAR = "PATCHVORONOI_THREADS"
LOG_LEVEL_ENV_VAR = "PATCHVORONOI_LOG_LEVEL"

# Exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ROBUSTNESS = 2

# Error messages
ERROR_DEGENERATE_TRIANGLE = "Degenerate triangle"
ERROR_DEGENERATE_TET = "Degenerate tetrahedron"
ERROR_UNLABELED_TRIANGLE = "Triangle has no patch label"
ERROR_EMPTY_SCOPE = "BVH scope contains no triangles"
ERROR_IDENTICAL_FIELDS = "Identical hyperplanes have no bisector"
ERROR_NONPOSITIVE_WEIGHT = "MWVD weights must be strictly positive"
ERROR_INCONSISTENT_CUT = (
    "Inconsistent hyperplane cut in float mode; rerun with --exact"
)
ERROR_NON_TERMINATION = "Discovered generator count exceeds the patch count"
