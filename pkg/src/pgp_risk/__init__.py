"""Piecewise Gaussian-process price forecasts with VaR/ES and backtesting."""

__version__ = "0.1.0"
