"""Resilience-based synthesis of assume-guarantee contracts for interconnected discrete-time systems."""

__version__ = "0.1.0"
