"""Mean-variance portfolio selection under Volterra Heston stochastic volatility."""

__version__ = "0.1.0"
