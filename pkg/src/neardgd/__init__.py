"""Decentralized gradient descent with growing numbers of consensus rounds."""
from .dynamics import CASES, Schedule, run
from .harness import ExperimentConfig, preset_piecewise, preset_regression, run_experiment
from .net import build_circulant, consensus_matrix, spectral_gap, validate_assumptions
from .problems import make_piecewise_quartic, make_regression

__all__ = ["CASES", "Schedule", "run", "ExperimentConfig", "preset_piecewise",
           "preset_regression", "run_experiment", "build_circulant", "consensus_matrix",
           "spectral_gap", "validate_assumptions", "make_piecewise_quartic",
           "make_regression"]
