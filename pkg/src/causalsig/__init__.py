"""Causal indicator signals, hysteresis execution and walk-forward selection."""

__version__ = "0.1.0"
