"""Fourier singular complement method for axisymmetric Poisson problems."""
__version__ = "0.1.0"
