"""Lattice walk models, Gaussian multiscale integration and the second-order RG flow."""

__version__ = "0.1.0"
