"""Seasonal SIS simulation on plantation networks with ABC parameter inference."""

__version__ = "0.1.0"
