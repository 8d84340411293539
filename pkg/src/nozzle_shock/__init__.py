"""Transonic shock solver for a slightly expanding two-dimensional nozzle."""

__version__ = "0.1.0"
