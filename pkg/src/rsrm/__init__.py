"""Riemannian stochastic recursive momentum and baseline optimizers."""
from .estimators import JointDiagonalizer, RiemannianCentroid, RiemannianPCA
from .manifolds import SPD, Grassmann, Stiefel
from .optimizers import METHODS, RunConfig, Schedule, default_schedule, expected_sfo, run_method
from .problems import ICAProblem, PCAProblem, RCProblem, make_problem, synth_ica, synth_pca, synth_spd

__version__ = "0.1.0"

__all__ = [
    "Grassmann", "Stiefel", "SPD",
    "PCAProblem", "ICAProblem", "RCProblem", "make_problem", "synth_pca", "synth_ica", "synth_spd",
    "METHODS", "RunConfig", "Schedule", "default_schedule", "expected_sfo", "run_method",
    "RiemannianPCA", "JointDiagonalizer", "RiemannianCentroid",
]
