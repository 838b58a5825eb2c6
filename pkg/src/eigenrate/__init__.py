"""Finite element eigenvalue convergence-rate lab."""
__version__ = "0.1.0"
