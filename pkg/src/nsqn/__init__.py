"""BFGS-family methods on nonsmooth convex test functions, with theory and experiments."""

from .objectives import (
    DimensionError,
    EvalResult,
    MaxAffine,
    PaperAbs,
    SkewAbs,
    evaluate,
    make_max_affine_known_opt,
    make_max_affine_vertex_opt,
)
from .linesearch import LineSearchParams, Stagnated, Step, UnboundedSuspected, bracketing_search
from .optimizer import FullBFGS, Gradient, LBFGS, RunParams, Termination, Trace, parse_method, run

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "EvalResult",
    "FullBFGS",
    "Gradient",
    "LBFGS",
    "LineSearchParams",
    "MaxAffine",
    "PaperAbs",
    "RunParams",
    "SkewAbs",
    "Stagnated",
    "Step",
    "Termination",
    "Trace",
    "UnboundedSuspected",
    "bracketing_search",
    "evaluate",
    "make_max_affine_known_opt",
    "make_max_affine_vertex_opt",
    "parse_method",
    "run",
]
