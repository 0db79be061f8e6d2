"""
Master-seed fan-out into named random streams.

A run is reproducible from a single integer: each consumer asks for its own
named substream, so adding draws to one stream never shifts another.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

STREAM_NAMES: tuple[str, ...] = (
    "init",
    "batch",
    "validation",
    "aggregation",
    "synth",
    "inflate",
    "eval",
)


@dataclass
class SeedStreams:
    """Named ``numpy.random.Generator`` substreams derived from one master seed."""

    master_seed: int
    _generators: Dict[str, np.random.Generator] = field(default_factory=dict, repr=False)

    def seed_sequence(self, name: str) -> np.random.SeedSequence:
        if name not in STREAM_NAMES:
            raise KeyError(f"unknown seed stream '{name}'; expected one of {STREAM_NAMES}")
        # Positional spawn keys keep each stream fixed regardless of access order.
        return np.random.SeedSequence(
            self.master_seed, spawn_key=(STREAM_NAMES.index(name),)
        )

    def generator(self, name: str) -> np.random.Generator:
        """Return the shared generator of ``name``; draws advance its state."""
        if name not in self._generators:
            self._generators[name] = np.random.default_rng(self.seed_sequence(name))
        return self._generators[name]

    def fresh(self, name: str) -> np.random.Generator:
        """Return a new generator positioned at the start of ``name``."""
        return np.random.default_rng(self.seed_sequence(name))

    def child_seed(self, name: str) -> int:
        """Derive a plain integer seed for APIs that take one."""
        return int(self.seed_sequence(name).generate_state(1, dtype=np.uint32)[0])
