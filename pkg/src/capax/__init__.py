"""Capacities of domains with small holes via boundary integral equations."""
__version__ = "0.1.0"
