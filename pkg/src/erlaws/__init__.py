"""Erdos-Renyi fluctuation laws for Birkhoff sums: simulation and estimation."""

__version__ = "0.1.0"
