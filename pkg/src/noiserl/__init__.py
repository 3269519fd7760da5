"""Noise-aware group-relative policy optimization for tool-use agents."""

__version__ = "0.1.0"
