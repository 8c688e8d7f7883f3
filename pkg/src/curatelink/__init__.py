"""Collective feature learning from curated groups via bipartite link prediction."""

__version__ = "0.1.0"
