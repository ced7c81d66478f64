"""Replica-symmetric energy predictions for nonlinear vector precoding.

Modules: :mod:`rmt` (R-transforms), :mod:`alphabet` (relaxed signal sets),
:mod:`replica` (fixed-point solvers), :mod:`montecarlo` (exact finite-size
solutions) and :mod:`cli`.
"""
from .alphabet import Alphabet, DataPrior, Kind, enumerate_points, lattice_points, nearest_point
from .errors import VecoderError
from .replica import (FixedPointConfig, ReplicaSolution, solve, solve_1d, solve_general,
                      solve_quadrature, solve_semidiscrete, solve_square_1d)
from .rmt import RTransformSpec, r_prime, r_transform

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "DataPrior", "Kind", "enumerate_points", "lattice_points", "nearest_point",
    "VecoderError", "FixedPointConfig", "ReplicaSolution", "solve", "solve_1d", "solve_general",
    "solve_quadrature", "solve_semidiscrete", "solve_square_1d", "RTransformSpec", "r_prime",
    "r_transform", "__version__",
]
