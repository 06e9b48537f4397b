"""Experiment orchestration, statistics and the command line."""
