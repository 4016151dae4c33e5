"""Ultrametric reaction-diffusion simulator for branching coral growth."""

__version__ = "0.1.0"
