"""Optimal stopping for spectrally negative Levy processes with hyperexponential jumps."""

__version__ = "0.1.0"

from .gerber_shiu import GerberShiuEvaluator, expected_reward, gerber_shiu, kappa
from .levy_model import JumpTerm, LevyModel, ModelError, generator_apply
from .measure_change import TiltedProblem, tilt, untilt_value
from .reward import Piece, PiecewiseExpPoly, RewardError, flatten_left, hump, mckean, put_linear_tail
from .scale_functions import ScaleEvaluator, build_scale
from .solver import GridSpec, Solution, SolverError, run_procedure

__all__ = [
    "GerberShiuEvaluator",
    "GridSpec",
    "JumpTerm",
    "LevyModel",
    "ModelError",
    "Piece",
    "PiecewiseExpPoly",
    "RewardError",
    "ScaleEvaluator",
    "Solution",
    "SolverError",
    "TiltedProblem",
    "build_scale",
    "expected_reward",
    "flatten_left",
    "generator_apply",
    "gerber_shiu",
    "hump",
    "kappa",
    "mckean",
    "put_linear_tail",
    "run_procedure",
    "tilt",
    "untilt_value",
]
