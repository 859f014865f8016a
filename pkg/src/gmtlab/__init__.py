"""Numerical laboratory for projections, Fourier energies, k-plane transforms and
unions of planes."""

__version__ = "0.1.0"

from gmtlab.errors import BudgetExceededError, ValidationError

__all__ = ["__version__", "BudgetExceededError", "ValidationError"]
