"""Stabilized explicit multirate solvers for stiff SDEs with split drift."""

__version__ = "0.1.0"
