"""Tabular LSTD and Monte Carlo policy evaluation for absorbing Markov reward processes."""

__version__ = "0.1.0"
