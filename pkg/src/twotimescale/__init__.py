"""Linear two-time-scale stochastic approximation driven by Markov noise.

Exact asymptotic covariances (noise covariances via the Poisson equation,
Lyapunov/Sylvester solves), seeded Monte-Carlo ensembles of the coupled,
single-time-scale and averaged iterations, stability-class classification
of block systems, and GTD/GTD2/TDC off-policy evaluation problems.
"""
from . import chain, classify, densemat, engine, problem, rl, theory
from .chain import ChainSpec, sample_path, solve_poisson, stationary_distribution
from .classify import BlockSystem, Classification
from .engine import EnsembleStats, InitPolicy, StepSchedule, Trajectory, monte_carlo
from .problem import TwoTimeScaleProblem, validate
from .theory import gamma_via_autocovariance, gamma_via_poisson, sigma_triple

__version__ = "0.1.0"

__all__ = [
    "chain", "classify", "densemat", "engine", "problem", "rl", "theory",
    "ChainSpec", "sample_path", "solve_poisson", "stationary_distribution",
    "BlockSystem", "Classification",
    "EnsembleStats", "InitPolicy", "StepSchedule", "Trajectory", "monte_carlo",
    "TwoTimeScaleProblem", "validate",
    "gamma_via_autocovariance", "gamma_via_poisson", "sigma_triple",
]
