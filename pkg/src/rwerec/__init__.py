"""Random walks with erasure for diversified recommendation."""

from .erasure import (apply_nu, erasure_bridge, erasure_longtail, erasure_uniform, erasure_zero)
from .graph import FeedbackGraph, TransitionMatrix, build_graph, propagate, transition
from .walk import RweScores, rwe_closed_form, rwe_score

__all__ = [
    "FeedbackGraph", "TransitionMatrix", "build_graph", "transition", "propagate",
    "erasure_zero", "erasure_uniform", "erasure_longtail", "erasure_bridge", "apply_nu",
    "RweScores", "rwe_score", "rwe_closed_form",
]
__version__ = "0.1.0"
