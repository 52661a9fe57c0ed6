"""Incorporation-extrapolation CSI feedback for massive MIMO."""

__version__ = "0.1.0"
