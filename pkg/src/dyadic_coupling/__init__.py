"""Dyadic grand coupling of Brownian motions: formulas, exact sampling, path simulation."""

from .analytics import (bound_head, bound_tail, bound_uniform, failure_prob_brownian_web,
                        failure_prob_dyadic, failure_prob_dyadic_series,
                        failure_prob_reflection, gap_attainability_scan,
                        inverse_failure_time, ratio_curve, thm4_deficit)
from .dyadic_core import DyadicContext, disagreement_level, new_context
from .numerics import QuadratureSpec, SeriesAccuracy

__version__ = "0.1.0"

__all__ = [
    "DyadicContext",
    "QuadratureSpec",
    "SeriesAccuracy",
    "bound_head",
    "bound_tail",
    "bound_uniform",
    "disagreement_level",
    "failure_prob_brownian_web",
    "failure_prob_dyadic",
    "failure_prob_dyadic_series",
    "failure_prob_reflection",
    "gap_attainability_scan",
    "inverse_failure_time",
    "new_context",
    "ratio_curve",
    "thm4_deficit",
]
