"""
Mesh I/O and validation.

Readers for the two inputs of every run, a patch-labelled triangle surface
(OBJ, optionally with a sidecar label file) and a tetrahedral domain
(Gmsh MSH v2 ASCII or legacy VTK ASCII), plus writers for the labelled
polygon soups the pipelines produce (OBJ or PLY).

On-disk formats:

- OBJ surface: ``v``/``f`` records; ``g``/``o`` records start a new patch.
  Polygonal faces are fan-triangulated. ``# exclude <id>`` comments mark
  patches that are not generators.
- Sidecar labels: one integer patch id per triangle, whitespace separated.
- OBJ complex: ``v`` records, then per face a ``# labels a b`` comment
  followed by its ``f`` record.
- PLY complex: ASCII PLY with per-face ``label_a``/``label_b`` ints.

Virtual generator tags are stored as ``-(patch + 1)``.
"""

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import meshio
import numpy as np
from scipy.spatial import cKDTree

from .constants import (
    ERROR_DEGENERATE_TET,
    ERROR_DEGENERATE_TRIANGLE,
    ERROR_UNLABELED_TRIANGLE,
    OUTPUT_FORMATS,
    TET_VOLUME_FLOOR,
    TRIANGLE_AREA_FLOOR,
    WELD_TOLERANCE,
)
from .exceptions import MeshFormatError, MeshValidationError
from .linear_field import GeneratorTag, circumradius

logger = logging.getLogger(__name__)


def bbox_diagonal(points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return 0.0
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


@dataclass(frozen=True, eq=False)
class PatchedSurface:
    """Triangle mesh whose triangles are partitioned into generator patches."""

    vertices: np.ndarray
    triangles: np.ndarray
    patch_of_triangle: np.ndarray
    excluded_patches: FrozenSet[int] = frozenset()

    @property
    def patch_count(self) -> int:
        return int(self.patch_of_triangle.max()) + 1 if len(self.patch_of_triangle) else 0

    @cached_property
    def patches(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {p: [] for p in range(self.patch_count)}
        for tri, patch in enumerate(self.patch_of_triangle.tolist()):
            out[patch].append(tri)
        return out

    @property
    def generator_patches(self) -> List[int]:
        return [p for p in range(self.patch_count) if p not in self.excluded_patches]

    @cached_property
    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit triangle normals following the vertex winding."""
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @cached_property
    def diagonal(self) -> float:
        return bbox_diagonal(self.vertices)

    def validate(self) -> "PatchedSurface":
        """Check the surface invariants; returns self for chaining."""
        if len(self.triangles) == 0:
            raise MeshValidationError("Surface has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshValidationError("Triangle vertex index out of range")
        if len(self.patch_of_triangle) != len(self.triangles):
            missing = min(len(self.patch_of_triangle), len(self.triangles))
            raise MeshValidationError(
                f"{ERROR_UNLABELED_TRIANGLE}: triangle {missing}", index=missing
            )
        if self.patch_of_triangle.min() < 0:
            bad = int(np.argmin(self.patch_of_triangle))
            raise MeshValidationError(f"{ERROR_UNLABELED_TRIANGLE}: triangle {bad}", index=bad)
        used = set(self.patch_of_triangle.tolist())
        if used != set(range(self.patch_count)):
            gap = min(set(range(self.patch_count)) - used)
            raise MeshValidationError(f"Patch ids are not contiguous: patch {gap} is empty")
        floor = TRIANGLE_AREA_FLOOR * self.diagonal**2
        small = np.flatnonzero(self.areas <= floor)
        if len(small):
            bad = int(small[0])
            raise MeshValidationError(
                f"{ERROR_DEGENERATE_TRIANGLE}: triangle {bad} has area {self.areas[bad]:.3e}",
                index=bad,
            )
        return self


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Tetrahedral domain; tets are stored positively oriented."""

    vertices: np.ndarray
    tets: np.ndarray

    def __len__(self) -> int:
        return len(self.tets)

    def tet_points(self, index: int) -> np.ndarray:
        return self.vertices[self.tets[index]]

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        p = self.vertices[self.tets]
        return np.einsum(
            "ij,ij->i", p[:, 1] - p[:, 0], np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0])
        ) / 6.0

    @cached_property
    def circumradii(self) -> np.ndarray:
        return circumradius(self.vertices[self.tets])

    @cached_property
    def diagonal(self) -> float:
        return bbox_diagonal(self.vertices)

    def validate(self) -> "TetMesh":
        if len(self.tets) == 0:
            raise MeshValidationError("Tet mesh has no tetrahedra")
        if self.tets.min() < 0 or self.tets.max() >= len(self.vertices):
            bad = int(np.flatnonzero((self.tets < 0).any(1) | (self.tets >= len(self.vertices)).any(1))[0])
            raise MeshValidationError(f"Tet {bad} has a vertex index out of range", index=bad)
        floor = TET_VOLUME_FLOOR * self.diagonal**3
        small = np.flatnonzero(np.abs(self.signed_volumes) < floor)
        if len(small):
            bad = int(small[0])
            raise MeshValidationError(
                f"{ERROR_DEGENERATE_TET}: tet {bad} has volume {self.signed_volumes[bad]:.3e}",
                index=bad,
            )
        return self


def make_tet_mesh(vertices, tets) -> TetMesh:
    """Build and validate a TetMesh, flipping negatively oriented tets."""
    verts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    cells = np.array(tets, dtype=np.int64).reshape(-1, 4)
    mesh = TetMesh(verts, cells).validate()
    flipped = mesh.signed_volumes < 0
    if flipped.any():
        logger.debug(f"Reorienting {int(flipped.sum())} negatively oriented tets")
        cells = cells.copy()
        cells[flipped] = cells[flipped][:, [0, 1, 3, 2]]
        mesh = TetMesh(verts, cells)
    return mesh


@dataclass(eq=False)
class CellComplex:
    """Labelled polygon soup produced by the pipelines."""

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    polygons: List[Tuple[int, ...]] = field(default_factory=list)
    polygon_labels: List[Tuple[GeneratorTag, GeneratorTag]] = field(default_factory=list)
    source_tet: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.polygons)

    def polygon_points(self, index: int) -> np.ndarray:
        return self.vertices[list(self.polygons[index])]

    def polygon_area(self, index: int) -> float:
        pts = self.polygon_points(index)
        if len(pts) < 3:
            return 0.0
        total = np.zeros(3)
        for k in range(1, len(pts) - 1):
            total += np.cross(pts[k] - pts[0], pts[k + 1] - pts[0])
        return 0.5 * float(np.linalg.norm(total))

    def subset(self, keep: Sequence[int]) -> "CellComplex":
        """Complex restricted to the given polygons, vertices renumbered in first-use order."""
        remap: Dict[int, int] = {}
        polygons = []
        for idx in keep:
            loop = []
            for v in self.polygons[idx]:
                if v not in remap:
                    remap[v] = len(remap)
                loop.append(remap[v])
            polygons.append(tuple(loop))
        order = sorted(remap, key=remap.get)
        return CellComplex(
            vertices=self.vertices[order] if order else np.zeros((0, 3)),
            polygons=polygons,
            polygon_labels=[self.polygon_labels[i] for i in keep],
            source_tet=[self.source_tet[i] for i in keep],
        )

    def validate(self, tolerance: float = 1e-7) -> "CellComplex":
        scale = max(bbox_diagonal(self.vertices), 1.0)
        for idx, loop in enumerate(self.polygons):
            if len(loop) < 3 or len(set(loop)) != len(loop):
                raise MeshValidationError(f"Polygon {idx} is not a simple loop", index=idx)
            a, b = self.polygon_labels[idx]
            if a == b:
                raise MeshValidationError(f"Polygon {idx} has identical labels {a}", index=idx)
            pts = self.polygon_points(idx)
            centered = pts - pts.mean(axis=0)
            if np.linalg.svd(centered, compute_uv=False)[-1] > tolerance * scale:
                raise MeshValidationError(f"Polygon {idx} is not planar", index=idx)
        return self


def _parse_index(token: str, count: int, path: str, number: int) -> int:
    try:
        raw = int(token.split("/")[0])
    except ValueError:
        raise MeshFormatError(f"Bad face index {token!r}", path=path, line=number)
    index = raw - 1 if raw > 0 else count + raw
    if raw == 0 or not 0 <= index < count:
        raise MeshFormatError(f"Face index {raw} out of range", path=path, line=number)
    return index


def load_patched_surface(path: str, labels: Optional[str] = None) -> PatchedSurface:
    """
    Load an OBJ surface and its patch labels.

    Args:
        path: OBJ file; ``g``/``o`` groups become patches in order of appearance
        labels: Optional sidecar file with one patch id per triangle; overrides groups

    Returns:
        Validated PatchedSurface

    Raises:
        MeshFormatError: if a file is malformed
        MeshValidationError: on degenerate or unlabeled triangles
    """
    vertices: List[Tuple[float, float, float]] = []
    triangles: List[Tuple[int, int, int]] = []
    groups: List[int] = []
    group_ids: Dict[str, int] = {}
    current = -1
    saw_group = False
    excluded = set()
    try:
        with open(path, "r") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise MeshFormatError(f"Cannot read {path}: {e}", path=path)

    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "exclude":
                try:
                    excluded.add(int(parts[1]))
                except ValueError:
                    raise MeshFormatError(f"Bad exclude comment {line!r}", path=path, line=number)
            continue
        parts = line.split()
        key = parts[0]
        if key == "v":
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except (IndexError, ValueError):
                raise MeshFormatError(f"Malformed vertex {line!r}", path=path, line=number)
        elif key == "f":
            if len(parts) < 4:
                raise MeshFormatError("Face with fewer than 3 vertices", path=path, line=number)
            idx = [_parse_index(t, len(vertices), path, number) for t in parts[1:]]
            for k in range(1, len(idx) - 1):
                triangles.append((idx[0], idx[k], idx[k + 1]))
                groups.append(current)
        elif key in ("g", "o"):
            name = " ".join(parts[1:]) or f"__unnamed_{number}"
            saw_group = True
            if name not in group_ids:
                group_ids[name] = len(group_ids)
            current = group_ids[name]
        # vt, vn, usemtl, s, ... carry nothing we need

    if not saw_group:
        groups = [0] * len(triangles)
    patch_of_triangle = np.array(groups, dtype=np.int64)

    if labels is not None:
        patch_of_triangle = _load_labels(labels, len(triangles))
    elif saw_group and len(patch_of_triangle) and patch_of_triangle.min() < 0:
        bad = int(np.argmin(patch_of_triangle))
        raise MeshValidationError(f"{ERROR_UNLABELED_TRIANGLE}: triangle {bad}", index=bad)

    surface = PatchedSurface(
        vertices=np.array(vertices, dtype=float).reshape(-1, 3),
        triangles=np.array(triangles, dtype=np.int64).reshape(-1, 3),
        patch_of_triangle=patch_of_triangle,
        excluded_patches=frozenset(excluded),
    ).validate()
    logger.info(
        f"Loaded surface {os.path.basename(path)}: triangles={len(triangles)} "
        f"patches={surface.patch_count} excluded={sorted(excluded)}"
    )
    return surface


def _load_labels(path: str, triangle_count: int) -> np.ndarray:
    try:
        with open(path, "r") as fh:
            tokens = fh.read().split()
    except OSError as e:
        raise MeshFormatError(f"Cannot read {path}: {e}", path=path)
    try:
        values = [int(t) for t in tokens]
    except ValueError as e:
        raise MeshFormatError(f"Label file {path}: {e}", path=path)
    if len(values) < triangle_count:
        raise MeshValidationError(
            f"{ERROR_UNLABELED_TRIANGLE}: triangle {len(values)}", index=len(values)
        )
    if len(values) > triangle_count:
        raise MeshFormatError(
            f"Label file has {len(values)} labels for {triangle_count} triangles", path=path
        )
    return np.array(values, dtype=np.int64)


def _tet_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".msh":
        return "gmsh"
    if ext == ".vtk":
        return "vtk"
    raise MeshFormatError(f"Unsupported tet mesh extension {ext!r}", path=path)


def load_tet_mesh(path: str) -> TetMesh:
    """
    Load a tetrahedral mesh from Gmsh MSH v2 ASCII or legacy VTK ASCII.

    Raises:
        MeshFormatError: if the file cannot be parsed or holds no tets
        MeshValidationError: on degenerate tets
    """
    file_format = _tet_format(path)
    try:
        mesh = meshio.read(path, file_format=file_format)
    except (meshio.ReadError, OSError, ValueError, KeyError, IndexError) as e:
        raise MeshFormatError(f"Cannot parse {path}: {e}", path=path)
    tets = mesh.cells_dict.get("tetra")
    if tets is None or len(tets) == 0:
        raise MeshFormatError(f"{path} contains no tetrahedra", path=path)
    result = make_tet_mesh(np.asarray(mesh.points, dtype=float)[:, :3], tets)
    logger.info(
        f"Loaded tet mesh {os.path.basename(path)}: vertices={len(result.vertices)} "
        f"tets={len(result.tets)} max_h={result.circumradii.max():.4g}"
    )
    return result


def write_tet_mesh(mesh: TetMesh, path: str) -> None:
    """Write a tet mesh as MSH v2 ASCII or VTK ASCII (chosen by extension)."""
    file_format = "gmsh22" if _tet_format(path) == "gmsh" else "vtk"
    out = meshio.Mesh(points=mesh.vertices, cells=[("tetra", mesh.tets)])
    meshio.write(path, out, file_format=file_format, binary=False)


def structured_tet_grid(lo, hi, n) -> TetMesh:
    """
    Box [lo, hi] split into n[0] x n[1] x n[2] cubes, six tets each.

    Every cube uses the same Kuhn split along its main diagonal, so the
    mesh is conforming.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = np.broadcast_to(np.asarray(n, dtype=int), (3,))
    axes = [np.linspace(lo[k], hi[k], n[k] + 1) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (n[1] + 1) + j) * (n[2] + 1) + k

    paths = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tets = []
    for i in range(n[0]):
        for j in range(n[1]):
            for k in range(n[2]):
                for path in paths:
                    corner = [i, j, k]
                    cell = [vid(*corner)]
                    for axis in path:
                        corner[axis] += 1
                        cell.append(vid(*corner))
                    tets.append(cell)
    return make_tet_mesh(vertices, tets)


def _label_ints(cc: CellComplex, idx: int) -> Tuple[int, int]:
    a, b = sorted(cc.polygon_labels[idx])
    return a.as_int(), b.as_int()


def write_cell_complex(cc: CellComplex, path: str, format: str = "obj") -> None:
    """
    Write a labelled complex as OBJ or ASCII PLY.

    Coordinates are written with repr() so re-reading reproduces them
    exactly; identical complexes produce byte-identical files.
    """
    fmt = format.lower()
    if fmt not in OUTPUT_FORMATS:
        raise MeshFormatError(f"Unsupported output format {format!r}", path=path)
    lines: List[str] = []
    if fmt == "obj":
        lines.append("# patchvoronoi cell complex")
        lines.append(f"# vertices {len(cc.vertices)} faces {len(cc.polygons)}")
        for x, y, z in cc.vertices.tolist():
            lines.append(f"v {x!r} {y!r} {z!r}")
        for idx, loop in enumerate(cc.polygons):
            a, b = _label_ints(cc, idx)
            lines.append(f"# labels {a} {b}")
            lines.append("f " + " ".join(str(v + 1) for v in loop))
    else:
        lines.extend(
            [
                "ply",
                "format ascii 1.0",
                "comment patchvoronoi cell complex",
                f"element vertex {len(cc.vertices)}",
                "property double x",
                "property double y",
                "property double z",
                f"element face {len(cc.polygons)}",
                "property list int int vertex_indices",
                "property int label_a",
                "property int label_b",
                "end_header",
            ]
        )
        for x, y, z in cc.vertices.tolist():
            lines.append(f"{x!r} {y!r} {z!r}")
        for idx, loop in enumerate(cc.polygons):
            a, b = _label_ints(cc, idx)
            lines.append(" ".join([str(len(loop))] + [str(v) for v in loop] + [str(a), str(b)]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cell_complex(path: str) -> CellComplex:
    """Read back a complex written by write_cell_complex (OBJ or PLY)."""
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    vertices: List[List[float]] = []
    polygons: List[Tuple[int, ...]] = []
    labels: List[Tuple[GeneratorTag, GeneratorTag]] = []
    try:
        if lines and lines[0] == "ply":
            end = lines.index("end_header")
            header = lines[:end]
            nv = int(next(l.split()[2] for l in header if l.startswith("element vertex")))
            nf = int(next(l.split()[2] for l in header if l.startswith("element face")))
            body = lines[end + 1 :]
            vertices = [[float(t) for t in l.split()[:3]] for l in body[:nv]]
            for l in body[nv : nv + nf]:
                tokens = [int(t) for t in l.split()]
                count = tokens[0]
                polygons.append(tuple(tokens[1 : 1 + count]))
                labels.append(tuple(GeneratorTag.from_int(t) for t in tokens[1 + count : 3 + count]))
        else:
            pending = None
            for l in lines:
                if l.startswith("v "):
                    vertices.append([float(t) for t in l.split()[1:4]])
                elif l.startswith("# labels "):
                    pending = tuple(GeneratorTag.from_int(t) for t in l.split()[2:4])
                elif l.startswith("f "):
                    polygons.append(tuple(int(t) - 1 for t in l.split()[1:]))
                    labels.append(pending)
                    pending = None
    except (ValueError, IndexError, StopIteration) as e:
        raise MeshFormatError(f"Cannot parse complex {path}: {e}", path=path)
    return CellComplex(
        vertices=np.array(vertices, dtype=float).reshape(-1, 3),
        polygons=polygons,
        polygon_labels=labels,
        source_tet=[-1] * len(polygons),
    )


def weld_vertices(cc: CellComplex, tolerance: Optional[float] = None) -> CellComplex:
    """
    Merge vertices closer than the tolerance (default 1e-9 * bbox diagonal).

    Each cluster is represented by its lowest-index vertex, so the result is
    deterministic. Consecutive duplicates are dropped from loops and loops
    left with fewer than three vertices are removed.
    """
    if len(cc.vertices) == 0:
        return CellComplex()
    if tolerance is None:
        tolerance = WELD_TOLERANCE * bbox_diagonal(cc.vertices)
    parent = np.arange(len(cc.vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if tolerance > 0:
        for i, j in sorted(cKDTree(cc.vertices).query_pairs(tolerance)):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(cc.vertices))])

    keep_polys, keep_labels, keep_tets = [], [], []
    for loop, label, tet in zip(cc.polygons, cc.polygon_labels, cc.source_tet):
        merged: List[int] = []
        for v in loop:
            r = int(roots[v])
            if not merged or merged[-1] != r:
                merged.append(r)
        while len(merged) > 1 and merged[0] == merged[-1]:
            merged.pop()
        if len(set(merged)) >= 3 and len(set(merged)) == len(merged):
            keep_polys.append(tuple(merged))
            keep_labels.append(label)
            keep_tets.append(tet)
    welded = CellComplex(cc.vertices, keep_polys, keep_labels, keep_tets)
    return welded.subset(range(len(keep_polys)))
