"""Unbalanced optimal transport and MMD with NFFT fast summation."""
__version__ = "0.1.0"
