"""Simulation and analysis of phase randomness in gain-switched lasers."""

__version__ = "0.1.0"
