"""Solver laboratory for monotone inclusions 0 in A(x).

Closed-loop resolvent flows, a large-step relative-error proximal
framework, higher-order surrogate oracles, and the metrics needed to
verify their convergence rates at desk scale.
"""

from . import checks, config, feedback, flow, hpe, metrics, operators, problems, tensor
from .errors import MonoflowError

__all__ = [
    "operators",
    "problems",
    "feedback",
    "flow",
    "hpe",
    "tensor",
    "metrics",
    "checks",
    "config",
    "MonoflowError",
]

__version__ = "0.1.0"
