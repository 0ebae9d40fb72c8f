"""Mixed-variable black-box optimization with margin-corrected CMA-ES."""

from .optimizer import CatCMAwM
from .space import MixedSolution, ObjectiveFunction, SearchSpace

__all__ = ["CatCMAwM", "MixedSolution", "ObjectiveFunction", "SearchSpace"]
