import numpy as np
import pytest

from lipgraph.graph_core import CutInstance, WeightedGraph
from lipgraph.pip import PipInstance
from lipgraph.settings import use_settings_file


@pytest.fixture(autouse=True)
def default_settings():
    use_settings_file(None)
    yield
    use_settings_file(None)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def path_instance():
    """0 -1.0- 1 -0.5- 2 -2.0- 3 with S = {0}, T = {3}; the min cut is {0, 1} with weight 0.5."""
    g = WeightedGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0)])
    return CutInstance(g, {0}, {3})


@pytest.fixture
def square_instance():
    g = WeightedGraph.from_edges(5, [(0, 1, 1.0), (1, 2, 1.5), (2, 3, 0.75), (3, 0, 1.25),
                                     (0, 4, 0.5), (2, 4, 1.0)])
    return CutInstance(g, {0}, {2})


@pytest.fixture
def bipartite_graph():
    """U = {0, 1}, R = {2, 3}; the heaviest matching is {(0, 2), (1, 3)} with weight 2.5."""
    return WeightedGraph.from_edges(
        4, [(0, 2, 1.0), (0, 3, 0.5), (1, 2, 0.75), (1, 3, 1.5)],
        bipartition=({0, 1}, {2, 3}))


@pytest.fixture
def small_pip():
    A = np.array([[1.0, 0.5, 0.0, 0.75],
                  [0.0, 0.5, 1.0, 0.25]])
    return PipInstance(A, np.array([1.0, 1.0]), np.array([1.0, 1.5, 0.75, 2.0]), c=2.0)
