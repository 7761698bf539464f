"""Locate small subsurface point scatterers from surface data by hybrid stochastic-deterministic search."""

__version__ = "0.1.0"
