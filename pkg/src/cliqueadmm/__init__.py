"""Distributed optimization over cliques of a communication graph."""

__version__ = "0.1.0"
