"""Federated averaging over WebSockets with local differential privacy."""

__version__ = "0.1.0"
