"""Numerical verification of almost-sharp trace inequalities via concentrating test functions."""

__version__ = "0.1.0"
