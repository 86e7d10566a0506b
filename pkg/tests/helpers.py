"""
Surface builders shared by the test suite.
"""

import numpy as np

from patchvoronoi import PatchedSurface


def square_patch(z, flip=False, lo=0.0, hi=1.0):
    """Two triangles covering [lo, hi]^2 at height z; normal +z unless flipped."""
    vertices = np.array([[lo, lo, z], [hi, lo, z], [hi, hi, z], [lo, hi, z]], dtype=float)
    triangles = [[0, 1, 2], [0, 2, 3]]
    if flip:
        triangles = [[0, 2, 1], [0, 3, 2]]
    return vertices, np.array(triangles)


def tiny_triangle(center, size=1e-3):
    """A small triangle standing in for a point generator."""
    c = np.asarray(center, dtype=float)
    vertices = np.array([c, c + [size, 0.0, 0.0], c + [0.0, size, 0.0]])
    return vertices, np.array([[0, 1, 2]])


def make_surface(parts, excluded=()):
    """Concatenate (vertices, triangles) parts, one patch per part."""
    vertices, triangles, labels = [], [], []
    offset = 0
    for patch, (v, t) in enumerate(parts):
        vertices.append(v)
        triangles.append(t + offset)
        labels.extend([patch] * len(t))
        offset += len(v)
    return PatchedSurface(
        vertices=np.vstack(vertices),
        triangles=np.vstack(triangles),
        patch_of_triangle=np.array(labels, dtype=np.int64),
        excluded_patches=frozenset(excluded),
    ).validate()


def cube_parts(lo=0.0, hi=1.0):
    """Six outward-oriented faces of the cube [lo, hi]^3, two triangles each."""
    corners = np.array([[x, y, z] for x in (lo, hi) for y in (lo, hi) for z in (lo, hi)])
    # corner index = 4x + 2y + z
    quads = [
        [0, 1, 3, 2],  # x = lo
        [4, 6, 7, 5],  # x = hi
        [0, 4, 5, 1],  # y = lo
        [2, 3, 7, 6],  # y = hi
        [0, 2, 6, 4],  # z = lo
        [1, 5, 7, 3],  # z = hi
    ]
    return [(corners[q], np.array([[0, 1, 2], [0, 2, 3]])) for q in quads]


def obj_text(surface):
    """OBJ text of a surface with one g group per patch."""
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in surface.vertices.tolist()]
    for patch, tris in sorted(surface.patches.items()):
        lines.append(f"g patch{patch}")
        for t in tris:
            a, b, c = (int(i) + 1 for i in surface.triangles[t])
            lines.append(f"f {a} {b} {c}")
    return "\n".join(lines) + "\n"
