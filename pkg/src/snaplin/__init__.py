"""Locally-linear latent ODE dynamics learned from snapshot data."""

from .version import __version__, get_version

__all__ = ["__version__", "get_version"]
