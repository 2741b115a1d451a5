"""Numerical laboratory for locally conformally Kähler geometry on Hopf manifolds."""

__version__ = "0.1.0"
