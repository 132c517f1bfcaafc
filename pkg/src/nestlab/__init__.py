"""nestlab: principal nests of real quadratic maps in arbitrary precision."""

__version__ = "0.1.0"

from .precision import PrecisionContext, bracketed_root, default_bits, eval_sqrt_branch
from .hyperbolic import GapConfiguration, Interval
from .dynamics import QuadraticMap
from .nest import NestConfig, NestResult, ReturnClass, Termination, build_nest
from .geometry import GeometryReport, compute_geometry

__all__ = [
    "__version__",
    "PrecisionContext",
    "bracketed_root",
    "default_bits",
    "eval_sqrt_branch",
    "GapConfiguration",
    "Interval",
    "QuadraticMap",
    "NestConfig",
    "NestResult",
    "ReturnClass",
    "Termination",
    "build_nest",
    "GeometryReport",
    "compute_geometry",
]
