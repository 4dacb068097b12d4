"""Accelerated Euler and Milstein schemes for small-parameter SDEs, with MLMC."""

__version__ = "0.1.0"
