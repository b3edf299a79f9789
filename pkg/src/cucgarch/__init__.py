"""Multivariate volatility modelling through conditionally uncorrelated components."""

__version__ = "0.1.0"
