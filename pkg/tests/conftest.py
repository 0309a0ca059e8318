import numpy as np
import pytest

from strainfem.elasticity import Material
from strainfem.mesh import build_topology, generate_cube_mesh

REF_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_tet_mesh():
    return build_topology(REF_TET, [[0, 1, 2, 3]])


@pytest.fixture(scope="session")
def two_tet_mesh():
    verts = np.vstack([REF_TET, [[1.0, 1.0, 1.0]]])
    return build_topology(verts, [[0, 1, 2, 3], [1, 2, 3, 4]])


@pytest.fixture(scope="session")
def cube_meshes():
    return {n: generate_cube_mesh(n) for n in (1, 2, 3)}


@pytest.fixture(scope="session")
def cube1(cube_meshes):
    return cube_meshes[1]


@pytest.fixture(scope="session")
def cube2(cube_meshes):
    return cube_meshes[2]


@pytest.fixture(scope="session")
def cube3(cube_meshes):
    return cube_meshes[3]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def unit_material():
    return Material(1.0, 1.0)


@pytest.fixture(scope="session")
def steel_like():
    # Lame constants of a steel-like solid in GPa
    return Material(121.15, 80.77)


def random_tet(rng, min_quality=0.05):
    """Random non-degenerate tetrahedron (volume not tiny relative to its edges)."""
    while True:
        x = rng.normal(size=(4, 3))
        d = x[1:] - x[0]
        vol = abs(np.linalg.det(d)) / 6.0
        longest = max(np.linalg.norm(x[i] - x[j]) for i in range(4) for j in range(i + 1, 4))
        if vol > min_quality * longest**3 / 6.0:
            return x
