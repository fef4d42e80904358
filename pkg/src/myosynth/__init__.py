"""Synthetic H&E muscle histology generation and quantitative fiber analysis."""

__version__ = "0.1.0"
