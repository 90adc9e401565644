"""Worst-case Value at Risk of a sum of two losses with known marginals and
mixed moment, computed by covariance-constrained transport linear programs."""

__version__ = "0.1.0"
