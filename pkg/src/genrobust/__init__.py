"""Robustness bounds and empirical robustness for classifiers on generated data."""

__version__ = "0.1.0"
