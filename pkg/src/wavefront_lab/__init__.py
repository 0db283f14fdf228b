"""Simulation and verification lab for stochastic FKPP front propagation."""

__version__ = "0.1.0"
