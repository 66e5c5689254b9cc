"""Quantum graphs built from piecewise-linear interval maps."""

__version__ = "0.1.0"
