"""Discrete-time markets with proportional transaction costs and nonlinear
industrial returns on finite scenario trees."""

__version__ = "0.1.0"
