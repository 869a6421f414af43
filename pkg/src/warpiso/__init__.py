"""Quantitative isoperimetry on warped products S^1(R) x S^{n-1}."""

__version__ = "0.1.0"
