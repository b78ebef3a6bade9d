"""Numerical toolkit for similar copies of simplices and distance graphs in fractal sets."""

__version__ = "0.1.0"
