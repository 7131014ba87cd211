"""Deterministic named random streams derived from one root seed.

Every stochastic component (data synthesis, init, noise draws, PGD
random starts, metric noise) pulls its own stream by name, so methods
that share components see identical draws and reruns are bit-identical.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(root_seed: int, name: str) -> np.random.Generator:
    """Generator for a named substream of ``root_seed``; stable across runs."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), tag]))
