"""Numerical laboratory for one-sided weights, operators and compactness diagnostics."""

__version__ = "0.1.0"
