"""Renormalized-volume toolkit on discrete surfaces."""

__version__ = "0.1.0"
