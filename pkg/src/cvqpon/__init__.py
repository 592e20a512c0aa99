"""Continuous-variable quantum passive optical networks: covariance-matrix key-rate engine."""

__version__ = "0.1.0"
