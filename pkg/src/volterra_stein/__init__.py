"""Fourier-Laplace transform and option pricing for the Volterra Stein-Stein model."""
__version__ = "0.1.0"
