"""Simulation core: the MAC engine, the lossy engine, adversaries and traces."""
