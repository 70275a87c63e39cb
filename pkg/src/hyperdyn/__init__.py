"""Quantitative toolkit for uniformly hyperbolic planar and toral maps."""

__version__ = "0.1.0"
