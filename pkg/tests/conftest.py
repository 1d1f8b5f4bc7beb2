import numpy as np
import pytest

from admmtrack.analysis import make_setup
from admmtrack.config import SimConfig
from admmtrack.graph import Graph, arc_matrices, generate_random_graph, laplacian_spectrum
from admmtrack.process import ParameterState, ProcessConfig, stationary_sample

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def k2():
    return Graph.from_edges(2, [(0, 1)])


@pytest.fixture
def p3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def small_net():
    g = generate_random_graph(5, 0.6, seed=3)
    return g, arc_matrices(g, 2), laplacian_spectrum(g)


def random_theta(rng, n, r, p, scale=1.0):
    return ParameterState(scale * rng.standard_normal((n, r, p)), scale * rng.standard_normal((n, r)))


@pytest.fixture
def small_cfg(tmp_path):
    return SimConfig(n_nodes=4, edge_prob=0.7, dim_p=2, rows_per_node=2, epsilon_ar=0.05,
                     rho=2.0, track_len=30, num_tracks=6, decay_window=10, warm_start_eps=1e-6,
                     seed=11, out_dir=tmp_path / "out")


@pytest.fixture
def small_setup(small_cfg):
    return make_setup(small_cfg)
