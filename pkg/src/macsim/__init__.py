"""Deterministic simulator for consensus over the abstract MAC layer and lossy channels."""

__version__ = "0.1.0"
