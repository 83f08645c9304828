"""Simulation of span-program and state-conversion query algorithms."""

__version__ = "0.1.0"
