"""
Pytest configuration file for patchvoronoi tests.

This file contains common fixtures and configuration for the pytest test suite.
"""

import os

import numpy as np
import pytest

from patchvoronoi import structured_tet_grid
from tests.helpers import cube_parts, make_surface, square_patch


def pytest_configure(config):
    """Configure pytest based on environment variables."""
    config.addinivalue_line("markers", "unit: mark a test as a unit test")
    config.addinivalue_line(
        "markers", "integration: mark a test as an end-to-end pipeline test"
    )
    config.addinivalue_line("markers", "slow: mark a test as slow (minutes)")

    # Slow acceptance fixtures only run when asked for
    if not os.environ.get("PATCHVORONOI_RUN_SLOW") and not config.option.markexpr:
        config.option.markexpr = "not slow"


@pytest.fixture
def unit_tet():
    """Return the unit corner tetrahedron."""
    return np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@pytest.fixture
def slab_surface():
    """Two parallel unit squares at z=0 (patch 0) and z=1 (patch 1)."""
    return make_surface([square_patch(0.0, flip=True), square_patch(1.0)])


@pytest.fixture
def single_patch_surface():
    """One unit square at z=0."""
    return make_surface([square_patch(0.0)])


@pytest.fixture
def cube_surface():
    """Unit cube with one patch per face."""
    return make_surface(cube_parts())


@pytest.fixture
def slab_mesh():
    """Tet grid inside the slab, away from the squares and their rims.

    Three layers put the mid-plane z = 0.5 strictly inside the middle layer.
    """
    return structured_tet_grid((0.2, 0.2, 0.1), (0.8, 0.8, 0.9), (2, 2, 3))


@pytest.fixture
def cube_mesh():
    """Tet grid inside the unit cube.

    The box is shrunk unevenly so that no tet face lies on a medial plane
    such as x = y.
    """
    return structured_tet_grid((0.013, 0.021, 0.017), (0.987, 0.979, 0.991), 3)


@pytest.fixture
def rng():
    """Return a seeded random generator."""
    return np.random.default_rng(20240611)


@pytest.fixture
def write_text(tmp_path):
    """Return a helper that writes text to a file under tmp_path."""

    def _write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return _write
