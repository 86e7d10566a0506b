"""
Per-tetrahedron linear distance fields.

Within a small tetrahedron the distance field of a generator is replaced by
the unique linear function d = a*x + b*y + c*z + w that interpolates the
distances at the four tet vertices. The graph of that function is a
hyperplane in (x, y, z, d) space; two such hyperplanes meet in a bisector
plane. Metric variants (power, additively and multiplicatively weighted
diagrams) transform the vertex distances before fitting, so the same
machinery serves all of them.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from .constants import ERROR_IDENTICAL_FIELDS, ERROR_NONPOSITIVE_WEIGHT
from .exceptions import FieldError, InvalidWeightError

logger = logging.getLogger(__name__)

Scalar = Union[float, Fraction]


@dataclass(frozen=True, order=True)
class GeneratorTag:
    """A generator identity: a real surface patch or its virtual mirror."""

    kind: str  # "real" or "virtual"
    patch: int

    def __post_init__(self):
        if self.kind not in ("real", "virtual"):
            raise FieldError(f"Unknown generator kind: {self.kind}")

    @classmethod
    def real(cls, patch: int) -> "GeneratorTag":
        return cls("real", int(patch))

    @classmethod
    def virtual(cls, patch: int) -> "GeneratorTag":
        return cls("virtual", int(patch))

    @property
    def is_virtual(self) -> bool:
        return self.kind == "virtual"

    def as_int(self) -> int:
        """On-disk label: patch id for real tags, -(patch + 1) for virtual ones."""
        return -(self.patch + 1) if self.is_virtual else self.patch

    @classmethod
    def from_int(cls, value: int) -> "GeneratorTag":
        value = int(value)
        return cls.virtual(-value - 1) if value < 0 else cls.real(value)

    def __str__(self) -> str:
        return f"v{self.patch}" if self.is_virtual else str(self.patch)


@dataclass(frozen=True)
class MetricVariant:
    """Distance transform applied before fitting: VD, PD, AWVD or MWVD."""

    kind: str = "vd"
    weights: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("vd", "pd", "awvd", "mwvd"):
            raise FieldError(f"Unknown metric variant: {self.kind}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "weights", dict(self.weights))
        if kind == "mwvd":
            for patch, weight in sorted(self.weights.items()):
                if not weight > 0:
                    raise InvalidWeightError(
                        f"{ERROR_NONPOSITIVE_WEIGHT}: patch {patch} has weight {weight}",
                        patch=patch,
                    )

    def weight(self, patch: int) -> float:
        """Weight of a patch; unlisted patches get the neutral weight."""
        default = 1.0 if self.kind == "mwvd" else 0.0
        return float(self.weights.get(patch, default))

    def transform(self, distance, patch: int):
        return transform_distance(distance, self.weight(patch), self)


@dataclass(frozen=True)
class Hyperplane4:
    """Linear field d = a*x + b*y + c*z + w over one tetrahedron."""

    a: Scalar
    b: Scalar
    c: Scalar
    w: Scalar
    tag: GeneratorTag

    @property
    def coefficients(self) -> Tuple[Scalar, Scalar, Scalar, Scalar]:
        return (self.a, self.b, self.c, self.w)

    @property
    def is_exact(self) -> bool:
        return isinstance(self.a, Fraction)

    def evaluate(self, points) -> np.ndarray:
        """Field value at one point (shape (3,)) or many points (shape (n, 3))."""
        pts = np.asarray(points, dtype=float)
        a, b, c, w = (float(v) for v in self.coefficients)
        return pts[..., 0] * a + pts[..., 1] * b + pts[..., 2] * c + w

    def evaluate_exact(self, point: Sequence[Fraction]) -> Fraction:
        a, b, c, w = (Fraction(v) for v in self.coefficients)
        x, y, z = (Fraction(v) for v in point)
        return a * x + b * y + c * z + w


def transform_distance(distance, weight, variant: MetricVariant):
    """
    Apply a metric variant to a Euclidean distance.

    Args:
        distance: Euclidean distance D >= 0 (float or Fraction; arrays allowed)
        weight: Generator weight w
        variant: Metric variant

    Returns:
        VD: D, PD: D**2 - w**2, AWVD: D + w, MWVD: D * w
    """
    kind = variant.kind
    if kind == "vd":
        return distance
    if kind == "pd":
        return distance * distance - weight * weight
    if kind == "awvd":
        return distance + weight
    if not weight > 0:
        raise InvalidWeightError(f"{ERROR_NONPOSITIVE_WEIGHT}: got {weight}")
    return distance * weight


def _solve_float(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting on a 4x4 system."""
    m = np.array(matrix, dtype=float)
    r = np.array(rhs, dtype=float)
    n = len(r)
    scale = np.max(np.abs(m)) or 1.0
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(m[col:, col])))
        if abs(m[pivot, col]) <= 1e-15 * scale:
            raise FieldError("Singular system: tetrahedron is degenerate")
        if pivot != col:
            m[[col, pivot]] = m[[pivot, col]]
            r[[col, pivot]] = r[[pivot, col]]
        for row in range(col + 1, n):
            factor = m[row, col] / m[col, col]
            if factor != 0.0:
                m[row, col:] -= factor * m[col, col:]
                r[row] -= factor * r[col]
    out = np.zeros(n)
    for row in range(n - 1, -1, -1):
        out[row] = (r[row] - m[row, row + 1 :] @ out[row + 1 :]) / m[row, row]
    return out


def solve_exact(matrix: Sequence[Sequence], rhs: Sequence) -> Tuple[Fraction, ...]:
    """
    Solve a square linear system over the rationals.

    Float entries are embedded exactly (Fraction(float) keeps every bit).

    Raises:
        FieldError: if the matrix is singular
    """
    n = len(rhs)
    m = [[Fraction(v) for v in row] + [Fraction(rhs[i])] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((row for row in range(col, n) if m[row][col] != 0), None)
        if pivot is None:
            raise FieldError("Singular system over the rationals")
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
        inv = 1 / m[col][col]
        for row in range(n):
            if row != col and m[row][col] != 0:
                factor = m[row][col] * inv
                m[row] = [x - factor * y for x, y in zip(m[row], m[col])]
    return tuple(m[i][n] / m[i][i] for i in range(n))


def fit_hyperplane(
    tet, distances, tag: GeneratorTag, exact: bool = False
) -> Hyperplane4:
    """
    Fit the linear field interpolating the given values at the tet vertices.

    Args:
        tet: (4, 3) vertex coordinates
        distances: Four transformed distances, one per vertex
        tag: Generator the field belongs to
        exact: Solve over the rationals instead of in double precision

    Returns:
        Hyperplane4 whose evaluation at vertex j reproduces distances[j]

    Raises:
        FieldError: if the tetrahedron is degenerate
    """
    pts = np.asarray(tet, dtype=float)
    if pts.shape != (4, 3) or len(distances) != 4:
        raise FieldError("fit_hyperplane expects 4 vertices and 4 distances")
    if exact:
        matrix = [[Fraction(p[0]), Fraction(p[1]), Fraction(p[2]), Fraction(1)] for p in pts]
        rhs = [Fraction(d) for d in distances]
        a, b, c, w = solve_exact(matrix, rhs)
        return Hyperplane4(a, b, c, w, tag)
    matrix = np.hstack([pts, np.ones((4, 1))])
    a, b, c, w = _solve_float(matrix, np.asarray(distances, dtype=float))
    return Hyperplane4(float(a), float(b), float(c), float(w), tag)


def bisector_plane(h_i: Hyperplane4, h_j: Hyperplane4) -> Tuple[Scalar, Scalar, Scalar, Scalar]:
    """
    Plane A*x + B*y + C*z + W = 0 on which two fields agree.

    Raises:
        FieldError: if the two fields are identical
    """
    coeffs = tuple(p - q for p, q in zip(h_i.coefficients, h_j.coefficients))
    if all(v == 0 for v in coeffs):
        raise FieldError(f"{ERROR_IDENTICAL_FIELDS}: {h_i.tag} and {h_j.tag}")
    return coeffs


def circumradius(tets) -> np.ndarray:
    """Circumradius of one tet (4, 3) or of a stack of tets (n, 4, 3)."""
    pts = np.asarray(tets, dtype=float)
    single = pts.ndim == 2
    if single:
        pts = pts[None]
    a = pts[:, 1] - pts[:, 0]
    b = pts[:, 2] - pts[:, 0]
    c = pts[:, 3] - pts[:, 0]
    bxc = np.cross(b, c)
    cxa = np.cross(c, a)
    axb = np.cross(a, b)
    denom = 2.0 * np.einsum("ij,ij->i", a, bxc)
    num = (
        np.einsum("ij,ij->i", a, a)[:, None] * bxc
        + np.einsum("ij,ij->i", b, b)[:, None] * cxa
        + np.einsum("ij,ij->i", c, c)[:, None] * axb
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        radius = np.linalg.norm(num, axis=1) / np.abs(denom)
    return radius[0] if single else radius


def linearization_error_bound(tet) -> float:
    """Upper bound 2h on |true distance - fitted field| inside a tet of circumradius h."""
    return 2.0 * float(circumradius(tet))


def weights_from_lines(lines) -> Dict[int, float]:
    """Parse `patch_id weight` lines (blank lines and '#' comments ignored)."""
    weights: Dict[int, float] = {}
    for number, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2:
            raise FieldError(f"Weights line {number}: expected 'patch_id weight', got {raw!r}")
        try:
            weights[int(parts[0])] = float(parts[1])
        except ValueError as e:
            raise FieldError(f"Weights line {number}: {e}")
    return weights
