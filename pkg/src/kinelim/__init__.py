"""Kinetic-to-hydrodynamic limit laboratory."""

__version__ = "0.1.0"
