"""Iterative-memory OpenIE toolkit."""

__version__ = "0.1.0"
