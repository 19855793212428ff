"""Numerical laboratory for pseudo-Finsler geometry."""

__version__ = "0.1.0"
