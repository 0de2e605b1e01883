"""Operator growth and Frobenius light cones in power-law spin systems."""

__version__ = "0.1.0"
