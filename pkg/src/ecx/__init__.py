"""Capability models of production and the economic-complexity pipeline."""

__version__ = "0.1.0"
