"""Simulation and numerical checks for stochastic averaging of multiscale Markov processes."""

__version__ = "0.1.0"
