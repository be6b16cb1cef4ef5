"""Budgeted mesh-point acquisition for PDE surrogate training."""

__version__ = "0.1.0"
