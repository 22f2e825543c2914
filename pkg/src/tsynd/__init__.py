"""Targeted synthetic training data from uncertainty-maximizing latent codes."""

__version__ = "0.1.0"
