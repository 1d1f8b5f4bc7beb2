"""Decentralized consensus ADMM tracking a Markov-modulated least-squares problem."""

from .config import SimConfig, parse_config
from .graph import Graph, arc_matrices, generate_random_graph, laplacian_spectrum
from .process import ParameterState, ProcessConfig, ar1_step, stationary_sample

__all__ = [
    "Graph", "ParameterState", "ProcessConfig", "SimConfig", "ar1_step", "arc_matrices",
    "generate_random_graph", "laplacian_spectrum", "parse_config", "stationary_sample",
]
__version__ = "0.1.0"
