"""Positivity-preserving P1 finite-element schemes for a haptotaxis tumor-invasion model."""

__version__ = "0.1.0"
