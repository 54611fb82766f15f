"""Differentiable causal discovery with active intervention targeting."""
from .estimator import SDIDiscovery
from .graphs import Dag, shd, structured_graph, erdos_renyi
from .scm import Environment, init_mlp_scm

__all__ = ["SDIDiscovery", "Dag", "Environment", "erdos_renyi", "init_mlp_scm", "shd",
           "structured_graph"]
__version__ = "0.1.0"
