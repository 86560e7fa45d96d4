"""Delay-robust static feedback: Bessel-Legendre LMI certificates, slack-optimized synthesis
and an independent spectral / simulation oracle."""
from .bessel_legendre import certify, max_delay_analysis
from .errors import (ConfigError, DecompositionError, DelaySynthError, DimensionMismatch,
                     InfeasibleAtH, NoProgress, NotStabilizable, NotStableAtZero,
                     ShapeMismatch, SimulationDiverged, SolverFailure, UnstableAtZero)
from .lmi import AffineMatrixExpr, SdpProblem, SolverOptions, solve
from .matrix_core import identity_structure, real_jordan_form
from .oracle import simulate, spectral_abscissa, spectral_max_delay
from .synthesis import (DelaySystem, SynthesisResult, fixed_epsilon_synthesis, iterate,
                        path_follow, sof_restarts)

__all__ = [
    "AffineMatrixExpr", "ConfigError", "DecompositionError", "DelaySynthError", "DelaySystem",
    "DimensionMismatch", "InfeasibleAtH", "NoProgress", "NotStabilizable", "NotStableAtZero",
    "SdpProblem", "ShapeMismatch", "SimulationDiverged", "SolverFailure", "SolverOptions",
    "SynthesisResult", "UnstableAtZero", "certify", "fixed_epsilon_synthesis",
    "identity_structure", "iterate", "max_delay_analysis", "path_follow", "real_jordan_form",
    "simulate", "solve", "sof_restarts", "spectral_abscissa", "spectral_max_delay",
]
