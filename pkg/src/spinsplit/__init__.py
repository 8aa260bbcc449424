"""Simulation and analysis of spatially split spin-squeezed atomic clouds."""

__version__ = "0.1.0"
