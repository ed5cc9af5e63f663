"""Integrity checks for neural network inference run by an untrusted worker."""

__version__ = "0.1.0"
