import numpy as np
import pytest
from scipy.optimize import linprog

from patchvoronoi import (
    DistanceOracle,
    MetricVariant,
    OrganicFilter,
    PatchedSurface,
    PipelineConfig,
    compute_medial_axis,
    compute_offset,
    compute_voronoi,
    linearization_error_bound,
    load_patched_surface,
    load_tet_mesh,
    read_cell_complex,
    structured_tet_grid,
    winding_number,
    write_cell_complex,
    write_tet_mesh,
)
from tests.helpers import cube_parts, make_surface, obj_text, tiny_triangle


def _min_distance(oracle, points):
    return np.array([min(oracle.distance(p, q) for p in oracle.per_patch) for q in points])


def _mid_planes(cc):
    return [float(cc.polygon_points(i)[:, 2].mean()) for i in range(len(cc))]


def _cube_with_split_face():
    """Welded unit cube; face x=0 is split into patches 0 and 6 along its diagonal."""
    corners = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    quads = [[0, 1, 3, 2], [4, 6, 7, 5], [0, 4, 5, 1], [2, 3, 7, 6], [0, 2, 6, 4], [1, 5, 7, 3]]
    triangles = [[q[0], q[1], q[2]] for q in quads] + [[q[0], q[2], q[3]] for q in quads]
    labels = [0, 1, 2, 3, 4, 5, 6, 1, 2, 3, 4, 5]
    return PatchedSurface(corners, np.array(triangles), np.array(labels)).validate()


def _voronoi_face_slack(points, i, j):
    """Margin by which the bisector face of points i and j fits in the unit box and their cells."""
    pi, pj = points[i], points[j]
    rows, rhs = [], []
    for k, pk in enumerate(points):
        if k in (i, j):
            continue
        n = pk - pi
        rows.append([*(2.0 * n / np.linalg.norm(n)), 1.0])
        rhs.append((pk @ pk - pi @ pi) / np.linalg.norm(n))
    for axis in range(3):
        unit = np.eye(3)[axis]
        rows.append([*(-unit), 1.0])
        rhs.append(0.0)
        rows.append([*unit, 1.0])
        rhs.append(1.0)
    res = linprog(
        c=[0.0, 0.0, 0.0, -1.0],
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        A_eq=np.array([[*(2.0 * (pj - pi)), 0.0]]),
        b_eq=np.array([pj @ pj - pi @ pi]),
        bounds=[(None, None)] * 3 + [(None, 1.0)],
    )
    return float(res.x[3]) if res.success else -np.inf


def _barycentric(tet, points):
    lam = np.linalg.solve((tet[1:] - tet[0]).T, (np.asarray(points) - tet[0]).T)
    return np.vstack([1.0 - lam.sum(axis=0), lam])


POINT_GENERATORS = np.array(
    [[0.22, 0.27, 0.24], [0.77, 0.74, 0.26], [0.73, 0.23, 0.78], [0.26, 0.76, 0.72]]
)


@pytest.mark.integration
class TestPointGenerators:
    """Tiny triangles act as points: the diagram is the point Voronoi diagram."""

    def test_matches_point_voronoi(self):
        surface = make_surface([tiny_triangle(p) for p in POINT_GENERATORS])
        mesh = structured_tet_grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), 5)
        cc = compute_voronoi(surface, mesh)
        cc.validate()

        pairs = {tuple(sorted(t.patch for t in labels)) for labels in cc.polygon_labels}
        slack = {
            (i, j): _voronoi_face_slack(POINT_GENERATORS, i, j)
            for i in range(4)
            for j in range(i + 1, 4)
        }
        assert {pair for pair, s in slack.items() if s > 0.05} <= pairs
        assert pairs <= {pair for pair, s in slack.items() if s > -1e-9}

        # a triangle of size 1e-3 is within 1.5e-3 of its point
        for idx, (a, b) in enumerate(cc.polygon_labels):
            bound = 2.0 * linearization_error_bound(mesh.vertices[mesh.tets[cc.source_tet[idx]]])
            dist = np.linalg.norm(
                cc.polygon_points(idx)[:, None, :] - POINT_GENERATORS[None], axis=2
            )
            assert np.abs(dist[:, a.patch] - dist[:, b.patch]).max() <= bound + 3e-3


@pytest.mark.integration
class TestSheetMetal:
    """Thin box whose four rim faces are excluded from the generators."""

    @staticmethod
    def _plate(excluded):
        parts = [(v * [1.0, 1.0, 0.1], t) for v, t in cube_parts()]
        return make_surface(parts, excluded=excluded)

    def test_medial_axis_is_mid_plane(self):
        mesh = structured_tet_grid((0.0, 0.0, 0.0), (1.0, 1.0, 0.1), (5, 5, 3))
        cc = compute_medial_axis(self._plate(excluded={0, 1, 2, 3}), mesh)
        assert len(cc) > 0
        cc.validate()
        pairs = {tuple(sorted(t.patch for t in labels)) for labels in cc.polygon_labels}
        assert pairs == {(4, 5)}
        assert cc.vertices[:, 2] == pytest.approx(np.full(len(cc.vertices), 0.05))
        assert sum(cc.polygon_area(i) for i in range(len(cc))) == pytest.approx(1.0)

    def test_rim_faces_join_when_not_excluded(self):
        mesh = structured_tet_grid((0.0, 0.0, 0.0), (1.0, 1.0, 0.1), (5, 5, 3))
        cc = compute_medial_axis(self._plate(excluded=()), mesh)
        patches = {t.patch for labels in cc.polygon_labels for t in labels}
        assert patches & {0, 1, 2, 3}


@pytest.mark.integration
class TestSlab:
    """Two parallel squares: the diagram is the mid-plane."""

    def test_files_end_to_end(self, tmp_path, slab_surface, slab_mesh):
        (tmp_path / "slab.obj").write_text(obj_text(slab_surface))
        write_tet_mesh(slab_mesh, str(tmp_path / "slab.vtk"))
        surface = load_patched_surface(str(tmp_path / "slab.obj"))
        mesh = load_tet_mesh(str(tmp_path / "slab.vtk"))

        cc = compute_voronoi(surface, mesh)
        write_cell_complex(cc, str(tmp_path / "vd.obj"))
        back = read_cell_complex(str(tmp_path / "vd.obj"))
        assert back.vertices[:, 2] == pytest.approx(np.full(len(back.vertices), 0.5))
        assert sum(back.polygon_area(i) for i in range(len(back))) == pytest.approx(0.36)

    @pytest.mark.parametrize(
        "variant, plane",
        [
            (MetricVariant("pd", {0: 0.3}), (1.0 + 0.09) / 2.0),
            (MetricVariant("awvd", {0: 0.1}), 0.45),
            (MetricVariant("mwvd", {0: 1.0, 1: 1.5}), 0.6),
        ],
    )
    def test_weighted_bisectors(self, slab_surface, slab_mesh, variant, plane):
        cc = compute_voronoi(slab_surface, slab_mesh, PipelineConfig(variant=variant))
        assert len(cc) > 0
        assert cc.vertices[:, 2] == pytest.approx(np.full(len(cc.vertices), plane))
        assert sum(cc.polygon_area(i) for i in range(len(cc))) == pytest.approx(0.36)

    def test_equal_mwvd_weights_match_plain_diagram(self, slab_surface, slab_mesh):
        plain = compute_voronoi(slab_surface, slab_mesh)
        weighted = compute_voronoi(
            slab_surface, slab_mesh, PipelineConfig(variant=MetricVariant("mwvd", {0: 2.0, 1: 2.0}))
        )
        assert len(plain) == len(weighted)
        assert weighted.vertices == pytest.approx(plain.vertices, abs=1e-9)

    def test_repeat_runs_are_byte_identical(self, tmp_path, slab_surface, slab_mesh):
        paths = []
        for name, threads in (("a.ply", 1), ("b.ply", 3)):
            cc = compute_voronoi(slab_surface, slab_mesh, PipelineConfig(threads=threads))
            write_cell_complex(cc, str(tmp_path / name), "ply")
            paths.append(tmp_path / name)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_offset_layers(self, slab_surface, slab_mesh):
        cfg = PipelineConfig(product="offset", offset_distance=0.2)
        result = compute_offset(slab_surface, slab_mesh, cfg)
        assert len(result.outward) == 0
        assert sorted({round(z, 9) for z in _mid_planes(result.inward)}) == [0.2, 0.8]
        for labels in result.inward.polygon_labels:
            real, virtual = labels
            assert not real.is_virtual and virtual.is_virtual
            assert real.patch == virtual.patch


@pytest.mark.integration
class TestCube:
    """Unit cube with one patch per face."""

    def test_medial_axis_is_equidistant(self, cube_surface, cube_mesh):
        cc = compute_medial_axis(cube_surface, cube_mesh)
        assert len(cc) > 0
        cc.validate()
        oracle = DistanceOracle(cube_surface)
        for idx, (a, b) in enumerate(cc.polygon_labels):
            assert not a.is_virtual and not b.is_virtual
            for q in cc.polygon_points(idx):
                da, db = oracle.distance(a.patch, q), oracle.distance(b.patch, q)
                assert da == pytest.approx(db, abs=1e-7)
                assert min(oracle.distance(p, q) for p in range(6)) == pytest.approx(da, abs=1e-7)

    def test_clip_to_interior(self, cube_surface):
        mesh = structured_tet_grid((-0.31, -0.29, -0.33), (1.29, 1.31, 1.27), 4)
        cfg = PipelineConfig(product="medial-axis", clip_to_interior=True)
        cc = compute_medial_axis(cube_surface, mesh, cfg)
        assert len(cc) > 0
        centroids = mesh.vertices[mesh.tets[sorted(set(cc.source_tet))]].mean(axis=1)
        assert (winding_number(cube_surface, centroids) >= 0.5).all()

    def test_organic_filter_removes_split_face_sheet(self, cube_mesh):
        surface = _cube_with_split_face()
        cfg = PipelineConfig(product="medial-axis")
        raw = compute_medial_axis(surface, cube_mesh, cfg)
        pairs = {tuple(sorted(t.patch for t in labels)) for labels in raw.polygon_labels}
        assert (0, 6) in pairs

        filtered_cfg = PipelineConfig(product="medial-axis", organic_filter=OrganicFilter())
        filtered = compute_medial_axis(surface, cube_mesh, filtered_cfg)
        pairs = {tuple(sorted(t.patch for t in labels)) for labels in filtered.polygon_labels}
        assert (0, 6) not in pairs
        assert (0, 2) in pairs

    def test_inward_offset(self, cube_surface, cube_mesh):
        d = 0.2
        result = compute_offset(
            cube_surface, cube_mesh, PipelineConfig(product="offset", offset_distance=d)
        )
        assert len(result.inward) > 0
        assert len(result.outward) == 0
        oracle = DistanceOracle(cube_surface)
        bound = 2.0 * cube_mesh.circumradii.max()
        for idx, (real, virtual) in enumerate(result.inward.polygon_labels):
            dist = _min_distance(oracle, result.inward.polygon_points(idx))
            assert np.abs(dist - d).max() <= bound
            if real.patch == virtual.patch:
                assert dist == pytest.approx(np.full(len(dist), d), abs=1e-7)

    def test_facets_stay_inside_their_tet(self, cube_surface, cube_mesh):
        cc = compute_medial_axis(cube_surface, cube_mesh)
        for idx in range(len(cc)):
            tet = cube_mesh.vertices[cube_mesh.tets[cc.source_tet[idx]]]
            assert _barycentric(tet, cc.polygon_points(idx)).min() >= -1e-9

    def test_outward_offset(self, cube_surface):
        d = 0.1
        mesh = structured_tet_grid((-0.25, -0.25, -0.25), (1.25, 1.25, 1.25), 6)
        result = compute_offset(
            cube_surface, mesh, PipelineConfig(product="offset", offset_distance=d)
        )
        assert len(result.inward) > 0
        assert len(result.outward) > 0

        inward_centres = [
            result.inward.polygon_points(i).mean(axis=0) for i in range(len(result.inward))
        ]
        outward_centres = [
            result.outward.polygon_points(i).mean(axis=0) for i in range(len(result.outward))
        ]
        assert (winding_number(cube_surface, np.array(inward_centres)) > 0.5).all()
        assert (winding_number(cube_surface, np.array(outward_centres)) < 0.5).all()

        oracle = DistanceOracle(cube_surface)
        beside_face = 0
        for idx, (real, virtual) in enumerate(result.outward.polygon_labels):
            assert not real.is_virtual and virtual.is_virtual
            tet = mesh.vertices[mesh.tets[result.outward.source_tet[idx]]]
            bound = linearization_error_bound(tet)
            if real.patch != virtual.patch:
                bound *= 2.0
            dist = _min_distance(oracle, result.outward.polygon_points(idx))
            assert np.abs(dist - d).max() <= bound
            # tets over the middle of face x = 1 see only that face
            centre = tet.mean(axis=0)
            if 1.0 < centre[0] and (np.abs(centre[1:] - 0.5) < 0.25).all():
                beside_face += 1
                assert (real.patch, virtual.patch) == (1, 1)
                assert result.outward.polygon_points(idx)[:, 0] == pytest.approx(
                    np.full(len(result.outward.polygons[idx]), 1.0 + d), abs=1e-7
                )
        assert beside_face > 0

    @pytest.mark.slow
    def test_exact_backend_matches_float(self, cube_surface, cube_mesh):
        fast = compute_medial_axis(cube_surface, cube_mesh)
        exact = compute_medial_axis(
            cube_surface, cube_mesh, PipelineConfig(product="medial-axis", backend="exact")
        )
        assert len(fast) == len(exact)
        assert sorted(map(tuple, np.round(fast.vertices, 7))) == sorted(
            map(tuple, np.round(exact.vertices, 7))
        )
