"""Installed snaplin version lookup."""

from __future__ import annotations

from functools import lru_cache
from importlib import metadata

_DISTRIBUTION = "snaplin"


@lru_cache(maxsize=1)
def get_version() -> str:
    """Return the installed distribution version, or ``unknown`` from a source tree."""
    try:
        return metadata.version(_DISTRIBUTION)
    except metadata.PackageNotFoundError:
        return "unknown"


__all__ = ["get_version", "__version__"]

__version__ = get_version()
