"""Optimality-preserving translation of Rabin objectives into limit-average reward machines."""

__version__ = "0.1.0"
