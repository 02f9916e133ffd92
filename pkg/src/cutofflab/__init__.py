"""Exact and simulated mixing diagnostics for translation-invariant random walks on Z_q^m."""

__version__ = "0.1.0"

from .errors import CutoffLabError, InvalidArgument, InvariantFailure, TooLarge  # noqa: E402
from .torus import IncrementDistribution, TorusVector, canonicalize, char_fn_generic, moments  # noqa: E402
from .walks import WalkSpec, char_fn_closed, correlation_model, make_dg_1xn, make_dg_nxn, make_srw, make_walk  # noqa: E402

__all__ = [
    "CutoffLabError",
    "IncrementDistribution",
    "InvalidArgument",
    "InvariantFailure",
    "TooLarge",
    "TorusVector",
    "WalkSpec",
    "canonicalize",
    "char_fn_closed",
    "char_fn_generic",
    "correlation_model",
    "make_dg_1xn",
    "make_dg_nxn",
    "make_srw",
    "make_walk",
    "moments",
]
