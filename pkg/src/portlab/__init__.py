"""Robust learning with proxy distributions: transport bounds, robust
discrimination and mixed real/proxy adversarial training on numpy."""
from . import classifiers, distributions, numerics, proximity, robustness, transport
from ._accel import USE_NUMBA

__version__ = "0.1.0"

__all__ = ["classifiers", "distributions", "numerics", "proximity", "robustness", "transport", "USE_NUMBA"]
