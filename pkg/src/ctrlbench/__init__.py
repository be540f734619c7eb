"""Parallel gradient-based and evolutionary controllers on small continuous-control tasks."""

__version__ = "0.1.0"
