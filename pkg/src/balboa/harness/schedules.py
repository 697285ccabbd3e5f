"""Chunk schedules: how a stream is cut into write acceptances or reads."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .synth import split_records

WHOLE = "whole"
ONE_BYTE = "one-byte"
RANDOM = "random"
BOUNDARY = "boundary"


def record_boundaries(data, explicit_nonce_len=8):
    """Offsets where a header, nonce, payload or tag starts, for every whole record."""
    cuts = set()
    pos = 0
    for rec in split_records(data):
        length = len(rec) - 5
        cuts.update({pos, pos + 1, pos + 5, pos + 5 + explicit_nonce_len,
                     pos + 5 + length - 16, pos + 5 + length - 1, pos + 5 + length})
        pos += len(rec)
    return sorted(c for c in cuts if 0 < c < len(data))


@dataclass(frozen=True)
class ChunkSchedule:
    policy: str = WHOLE
    seed: int = 0

    def sizes(self, data, salt=0):
        """Chunk sizes (each at least 1) summing to ``len(data)``."""
        n = len(data)
        if n == 0:
            return []
        if self.policy == WHOLE:
            return [n]
        if self.policy == ONE_BYTE:
            return [1] * n
        if self.policy == BOUNDARY:
            cuts = [0] + record_boundaries(data) + [n]
            return [b - a for a, b in zip(cuts, cuts[1:]) if b > a]
        if self.policy == RANDOM:
            rng = random.Random(self.seed * 1_000_003 + salt)
            out = []
            left = n
            while left:
                roll = rng.random()
                if roll < 0.2:
                    size = rng.randint(1, 8)
                elif roll < 0.7:
                    size = rng.randint(9, 2000)
                else:
                    size = rng.randint(2001, 20000)
                size = min(size, left)
                out.append(size)
                left -= size
            return out
        raise ValueError(f"unknown schedule policy {self.policy!r}")

    def __str__(self):
        return f"{self.policy}:{self.seed}" if self.policy == RANDOM else self.policy


def standard_schedules(random_seeds=1000):
    yield ChunkSchedule(WHOLE)
    yield ChunkSchedule(ONE_BYTE)
    yield ChunkSchedule(BOUNDARY)
    for seed in range(random_seeds):
        yield ChunkSchedule(RANDOM, seed)
