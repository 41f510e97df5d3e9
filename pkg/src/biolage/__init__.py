"""Biological-age dynamics with multiplicative rejuvenation and premature-aging jumps.

Three representations of one model are provided and cross-checked:
an individual-based simulation (:mod:`biolage.ibm`), a finite-volume solver
for the density (:mod:`biolage.pde`) and the closed moment cascade
(:mod:`biolage.moments`).
"""
from .errors import BiolageError
from .kernels import BACKEND
from .model import DemographyParams, ModelParams, ValidatedParams, validate

__version__ = "0.1.0"

__all__ = ["BACKEND", "BiolageError", "DemographyParams", "ModelParams", "ValidatedParams", "validate", "__version__"]
