"""Dependent bond percolation with ladder environments: simulation and checks."""

__version__ = "0.1.0"
