import math
from fractions import Fraction

import numpy as np
import pytest

from patchvoronoi import (
    FieldError,
    GeneratorTag,
    Hyperplane4,
    InvalidWeightError,
    MetricVariant,
    bisector_plane,
    fit_hyperplane,
    linearization_error_bound,
    transform_distance,
)
from patchvoronoi.linear_field import circumradius, weights_from_lines


def _cramer(tet, values):
    """Independent 4x4 solve by Cramer's rule."""
    m = np.hstack([np.asarray(tet, dtype=float), np.ones((4, 1))])
    det = np.linalg.det(m)
    out = []
    for col in range(4):
        mc = m.copy()
        mc[:, col] = values
        out.append(np.linalg.det(mc) / det)
    return out


@pytest.mark.unit
class TestGeneratorTag:
    """Unit tests for generator tags."""

    def test_int_encoding(self):
        assert GeneratorTag.real(3).as_int() == 3
        assert GeneratorTag.virtual(0).as_int() == -1
        assert GeneratorTag.from_int(-4) == GeneratorTag.virtual(3)
        assert GeneratorTag.from_int(2) == GeneratorTag.real(2)

    def test_real_sorts_before_virtual(self):
        assert sorted([GeneratorTag.virtual(0), GeneratorTag.real(5)])[0] == GeneratorTag.real(5)

    def test_unknown_kind(self):
        with pytest.raises(FieldError):
            GeneratorTag("mirror", 1)


@pytest.mark.unit
class TestTransformDistance:
    """Unit tests for the metric variants."""

    def test_power_diagram(self):
        assert transform_distance(2.0, 1.0, MetricVariant("pd")) == 3.0

    def test_zero_weight(self):
        assert transform_distance(2.0, 0.0, MetricVariant("awvd")) == 2.0
        assert transform_distance(2.0, 0.0, MetricVariant("pd")) == 4.0

    def test_multiplicative_unit_weight(self):
        assert transform_distance(2.0, 1.0, MetricVariant("mwvd")) == 2.0

    def test_vd_ignores_weight(self):
        assert transform_distance(2.0, 7.0, MetricVariant("vd")) == 2.0

    def test_nonpositive_mwvd_weight_names_patch(self):
        with pytest.raises(InvalidWeightError) as exc:
            MetricVariant("mwvd", {0: 1.0, 2: 0.0})
        assert exc.value.patch == 2

    def test_default_weights(self):
        assert MetricVariant("mwvd").weight(9) == 1.0
        assert MetricVariant("awvd").weight(9) == 0.0

    def test_kind_is_case_insensitive(self):
        assert MetricVariant("PD").kind == "pd"

    def test_unknown_variant(self):
        with pytest.raises(FieldError):
            MetricVariant("geodesic")

    def test_exact_values_stay_rational(self):
        out = transform_distance(Fraction(3, 2), Fraction(1, 2), MetricVariant("pd"))
        assert out == Fraction(2)

    def test_weights_file_lines(self):
        lines = ["# weights", "0 1.5", "", "2 0.25  # corner"]
        assert weights_from_lines(lines) == {0: 1.5, 2: 0.25}

    def test_weights_file_bad_line(self):
        with pytest.raises(FieldError):
            weights_from_lines(["0 1 2"])


@pytest.mark.unit
class TestFitHyperplane:
    """Unit tests for per-tet field fitting."""

    def test_field_is_x(self, unit_tet):
        h = fit_hyperplane(unit_tet, [0, 1, 0, 0], GeneratorTag.real(0))
        assert h.coefficients == pytest.approx((1.0, 0.0, 0.0, 0.0), abs=1e-15)

    def test_constant_field(self, rng):
        tet = rng.random((4, 3))
        h = fit_hyperplane(tet, [5, 5, 5, 5], GeneratorTag.real(0))
        assert h.coefficients == pytest.approx((0.0, 0.0, 0.0, 5.0), abs=1e-9)

    def test_random_fields_match_cramer(self, rng):
        for _ in range(50):
            tet = rng.random((4, 3))
            values = rng.random(4) * 3
            h = fit_hyperplane(tet, values, GeneratorTag.real(1))
            assert np.abs(h.evaluate(tet) - values).max() < 1e-9
            assert list(h.coefficients) == pytest.approx(_cramer(tet, values), rel=1e-6, abs=1e-9)

    def test_exact_fit_reproduces_vertices(self, rng):
        tet = rng.random((4, 3))
        values = rng.random(4)
        h = fit_hyperplane(tet, values, GeneratorTag.real(0), exact=True)
        assert h.is_exact
        for p, v in zip(tet, values):
            assert h.evaluate_exact(p) == Fraction(v)

    def test_degenerate_tet(self):
        flat = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
        with pytest.raises(FieldError):
            fit_hyperplane(flat, [0, 1, 2, 3], GeneratorTag.real(0))
        with pytest.raises(FieldError):
            fit_hyperplane(flat, [0, 1, 2, 3], GeneratorTag.real(0), exact=True)

    def test_wrong_shape(self, unit_tet):
        with pytest.raises(FieldError):
            fit_hyperplane(unit_tet, [0, 1, 2], GeneratorTag.real(0))

    def test_interpolation_error_bound(self, rng):
        """A point generator's true distance stays within 2h of its fitted field."""
        source = np.array([2.0, 1.0, -0.5])
        for _ in range(20):
            tet = rng.random((4, 3)) * 0.1 + 0.5
            bound = linearization_error_bound(tet)
            h = fit_hyperplane(tet, np.linalg.norm(tet - source, axis=1), GeneratorTag.real(0))
            bary = rng.dirichlet(np.ones(4), size=100)
            samples = bary @ tet
            err = np.abs(np.linalg.norm(samples - source, axis=1) - h.evaluate(samples))
            assert err.max() <= bound

    def test_equal_mwvd_weights_keep_argmin(self, rng):
        sources = rng.random((3, 3)) * 4
        points = rng.random((200, 3))
        vd = MetricVariant("vd")
        mwvd = MetricVariant("mwvd", {0: 2.5, 1: 2.5, 2: 2.5})
        d = np.linalg.norm(points[:, None, :] - sources[None], axis=2)
        plain = np.argmin([[vd.transform(x, p) for p, x in enumerate(row)] for row in d], axis=1)
        weighted = np.argmin([[mwvd.transform(x, p) for p, x in enumerate(row)] for row in d], axis=1)
        assert (plain == weighted).all()


@pytest.mark.unit
class TestBisectorPlane:
    """Unit tests for bisector planes."""

    def test_symmetric_pair(self):
        h_i = Hyperplane4(1.0, 0.0, 0.0, 0.0, GeneratorTag.real(0))
        h_j = Hyperplane4(-1.0, 0.0, 0.0, 1.0, GeneratorTag.real(1))
        assert bisector_plane(h_i, h_j) == (2.0, 0.0, 0.0, -1.0)

    def test_identical_fields(self):
        h = Hyperplane4(1.0, 2.0, 3.0, 4.0, GeneratorTag.real(0))
        with pytest.raises(FieldError):
            bisector_plane(h, Hyperplane4(1.0, 2.0, 3.0, 4.0, GeneratorTag.real(1)))

    def test_points_on_plane_are_equidistant(self, rng):
        h_i = Hyperplane4(*rng.random(4), tag=GeneratorTag.real(0))
        h_j = Hyperplane4(*rng.random(4), tag=GeneratorTag.real(1))
        A, B, C, W = bisector_plane(h_i, h_j)
        xy = rng.random((50, 2))
        z = -(A * xy[:, 0] + B * xy[:, 1] + W) / C
        pts = np.column_stack([xy, z])
        assert np.abs(h_i.evaluate(pts) - h_j.evaluate(pts)).max() < 1e-9 * max(1.0, np.abs(z).max())

    def test_power_bisector_is_radical_plane(self, rng):
        """PD fields of two weighted points meet on the analytic radical plane."""
        p, q = np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])
        wp, wq = 0.3, 0.1
        variant = MetricVariant("pd", {0: wp, 1: wq})
        tet = rng.random((4, 3)) * 0.05 + [0.4, 0.2, 0.1]
        fields = []
        for patch, src in enumerate((p, q)):
            dist = np.linalg.norm(tet - src, axis=1)
            values = [variant.transform(x, patch) for x in dist]
            fields.append(fit_hyperplane(tet, values, GeneratorTag.real(patch)))
        A, B, C, W = bisector_plane(*fields)
        # radical plane: |x-p|^2 - wp^2 = |x-q|^2 - wq^2  ->  2(q-p).x + |p|^2 - |q|^2 - wp^2 + wq^2 = 0
        expected = np.array([2.0, 0.0, 0.0, -1.0 - wp**2 + wq**2])
        got = np.array([A, B, C, W])
        assert got == pytest.approx(expected, abs=1e-9)


@pytest.mark.unit
class TestErrorBound:
    """Unit tests for the linearization error bound."""

    def test_corner_tet(self, unit_tet):
        assert linearization_error_bound(unit_tet) == pytest.approx(math.sqrt(3.0))

    def test_regular_tet(self):
        tet = np.array(
            [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
        ) / (2.0 * math.sqrt(2.0))
        assert linearization_error_bound(tet) == pytest.approx(2.0 * math.sqrt(6.0) / 4.0)

    def test_scales_linearly(self, rng):
        tet = rng.random((4, 3))
        assert linearization_error_bound(3.0 * tet) == pytest.approx(3.0 * linearization_error_bound(tet))

    def test_stacked_circumradii(self, unit_tet):
        radii = circumradius(np.stack([unit_tet, 2.0 * unit_tet]))
        assert radii == pytest.approx([math.sqrt(3.0) / 2.0, math.sqrt(3.0)])
