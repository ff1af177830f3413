"""Homoenergetic solutions of the Boltzmann equation: particle simulation and analytic oracles."""
__version__ = "0.1.0"
