"""Simulation and analysis toolkit for quantum recurrent embedding networks."""

__version__ = "0.1.0"
