"""Minimizing-movement solver and certificate checks for linear-growth gradient flows."""

__version__ = "0.1.0"
