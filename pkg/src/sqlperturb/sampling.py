"""Seeded sampling shared by the perturbation generators.

All randomness flows from a single integer seed. Per-scope generators are
derived by hashing the seed together with stable string labels, so
generation is reproducible and parallelizable per scope without shared
state.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True)
class SamplingPolicy:
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.repeats < 1:
            raise DataError("repeats must be >= 1")

    def rng(self, *labels: str) -> random.Random:
        return derive_rng(self.seed, *labels)


def derive_rng(seed: int, *labels: str) -> random.Random:
    digest = hashlib.sha256(("|".join([str(seed), *labels])).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def sample_nonempty_subset(rng: random.Random, keys: list, max_draws: int = 64) -> list:
    """Uniform draw over the non-empty subsets of `keys`."""
    if not keys:
        raise DataError("cannot sample a subset of nothing")
    for _ in range(max_draws):
        chosen = [k for k in keys if rng.random() < 0.5]
        if chosen:
            return chosen
    return list(keys)  # 2^-64 corner; every key beats an empty draw


def sample_distinct(rng: random.Random, candidates: list, count: int) -> list:
    """Up to `count` distinct candidates, order randomized but reproducible."""
    if count >= len(candidates):
        picked = list(candidates)
        rng.shuffle(picked)
        return picked
    return rng.sample(candidates, count)
