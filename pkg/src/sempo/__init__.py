"""Lightweight spectral / mixture-of-prompts time-series forecaster."""

__version__ = "0.1.0"
