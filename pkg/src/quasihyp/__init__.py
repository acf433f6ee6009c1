"""Generalized k-quasi-hyperbolic metrics on convex domains."""

__version__ = "0.1.0"
