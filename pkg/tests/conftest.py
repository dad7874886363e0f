"""Shared fixtures: small meshes and assembly patterns."""

import numpy as np
import pytest

from rdqmc.assembly import AssemblyPattern
from rdqmc.mesh import Mesh, generate_structured


@pytest.fixture(scope="session")
def unit_triangle():
    """Single right triangle with vertices (0,0), (1,0), (0,1)."""
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2]])
    return Mesh(nodes, triangles)


@pytest.fixture(scope="session")
def square_mesh_4():
    """Structured 100 mm square, 4 cells per side (25 nodes)."""
    return generate_structured(100.0, 4)


@pytest.fixture(scope="session")
def square_mesh_10():
    """Structured 100 mm square, 10 cells per side (121 nodes)."""
    return generate_structured(100.0, 10)


@pytest.fixture(scope="session")
def pattern_4(square_mesh_4):
    return AssemblyPattern(square_mesh_4)


@pytest.fixture(scope="session")
def pattern_10(square_mesh_10):
    return AssemblyPattern(square_mesh_10)
