"""Desk-scale numerics for scattering criteria between quasi-isometric metrics."""

__version__ = "0.1.0"
