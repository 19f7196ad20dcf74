"""Gradient descent over actively interconnected recursive estimators."""

__version__ = "0.1.0"
