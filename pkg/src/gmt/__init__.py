"""Corkscrew domains, visibility cones, dyadic porosity and tangent detection."""

__version__ = "0.1.0"

from .errors import GMTError, HypothesisViolated, InvalidInput, OutOfWindow, ResolutionError  # noqa: E402
from .scene import Ball, BoundarySample, Scene, make_scene  # noqa: E402

__all__ = ["Ball", "BoundarySample", "GMTError", "HypothesisViolated", "InvalidInput",
           "OutOfWindow", "ResolutionError", "Scene", "make_scene", "__version__"]
