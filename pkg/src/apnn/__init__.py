"""Asymptotic-preserving neural networks for the diffusively scaled linear transport equation."""

__version__ = "0.1.0"
