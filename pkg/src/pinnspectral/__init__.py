"""Spectral solvers in bases extracted from trained PINN features.

A tanh network is trained on a Poisson problem, its last hidden layer is
orthonormalized under a quadrature rule, and the resulting hierarchical
basis is reused in Nitsche-Galerkin solves of Poisson, heat and steady
nonlinear problems.
"""

from .basis import DROP_TOL, LegendreBasis, OrthonormalBasis, extract_basis, load_basis
from .network import FeatureNetwork, init_network, load_network
from .nitsche import DEFAULT_BETA, NitscheSolver, assemble, rank_sweep, select_rank, solve
from .problems import EvolutionProblem, PoissonProblem, PROBLEM_IDS, get_problem
from .quadrature import Box, Interval, LShape, QuadratureRule, build_rule, gauss_legendre_1d
from .timestep import (
    InstabilityError,
    evolution_sweep,
    legendre_reference,
    run_evolution,
    run_to_steady,
    steady_sweep,
)
from .trainer import PINNRegressor, TrainConfig, train_adam

__version__ = "0.1.0"

__all__ = [
    "DROP_TOL",
    "DEFAULT_BETA",
    "PROBLEM_IDS",
    "Box",
    "EvolutionProblem",
    "FeatureNetwork",
    "InstabilityError",
    "Interval",
    "LShape",
    "LegendreBasis",
    "NitscheSolver",
    "OrthonormalBasis",
    "PINNRegressor",
    "PoissonProblem",
    "QuadratureRule",
    "TrainConfig",
    "assemble",
    "build_rule",
    "evolution_sweep",
    "extract_basis",
    "gauss_legendre_1d",
    "get_problem",
    "init_network",
    "legendre_reference",
    "load_basis",
    "load_network",
    "rank_sweep",
    "run_evolution",
    "run_to_steady",
    "select_rank",
    "solve",
    "steady_sweep",
    "train_adam",
]
