"""Explicit ReLU network constructions for log-probability approximation."""

__version__ = "0.1.0"
