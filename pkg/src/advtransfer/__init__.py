"""Adversarial transferability laboratory for small network-security classifiers."""

__version__ = "0.1.0"
