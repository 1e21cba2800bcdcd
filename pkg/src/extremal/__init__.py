"""Extremal metrics, Bergman kernels and torsion on the sphere and flat tori."""

__version__ = "0.1.0"
