"""Equilibria of a discrete-time limit-order-book game under a Gaussian
fundamental price, with Monte-Carlo verification tools."""

from .equilibrium import EquilibriumPath, ModelParams, solve_full
from .gaussian_kernel import GaussianIncrement, mills_inverse, mills_ratio

__all__ = ["EquilibriumPath", "GaussianIncrement", "ModelParams", "mills_inverse", "mills_ratio", "solve_full"]
__version__ = "0.1.0"
