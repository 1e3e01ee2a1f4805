"""Adaptive convolutional networks driven by side information."""

__version__ = "0.1.0"
