"""Discrete-mechanics trajectory planning with complementarity-scheduled contact."""

__version__ = "0.1.0"
