"""Arrival times, backflow and Bohmian trajectories for free Gaussian superpositions."""

__version__ = "0.1.0"
