import numpy as np
import pytest

from porosim.assets import make_demo_scene
from porosim.mesh import TetMesh


@pytest.fixture(scope="session")
def bar_scene_dir(tmp_path_factory):
    """Demo bar scene written once per test session; load_scene from it."""
    out = tmp_path_factory.mktemp("bar_scene")
    make_demo_scene(out, kind="bar")
    return out


@pytest.fixture()
def unit_tet():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                       [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return TetMesh(points, np.array([[0, 1, 2, 3]]))


@pytest.fixture()
def two_tets():
    """Two tets sharing the (0,1,2) face."""
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                       [0.0, 0.0, 1.0], [0.3, 0.3, -1.0]])
    return TetMesh(points, np.array([[0, 1, 2, 3], [0, 2, 1, 4]]))
