"""Variational learning and the adaptive label noise it induces."""

__version__ = "0.1.0"
