"""The client/server equipment matrix and the random-probe experiment."""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..signaling import classify_first_record, mark_tag
from ..tls.keys import derive_covert_keys
from .pair import Side, plain_server_side, run_pair, unpinned_client_side
from .schedules import ChunkSchedule

CELLS = (("balboa", "balboa"), ("balboa", "plain"), ("plain", "balboa"), ("plain", "plain"))


def signaling_matrix(scenario, schedule=ChunkSchedule()):
    """Run every (client, server) cell; returns {cell: report}.

    A "plain" server is a different TLS server that runs no shim, so a Balboa
    client pinned to the real server's key sees a signature it cannot verify.
    """
    sides = {
        ("balboa", "balboa"): (Side(), Side()),
        ("balboa", "plain"): (unpinned_client_side(), plain_server_side()),
        ("plain", "balboa"): (Side(balboa=False), Side()),
        ("plain", "plain"): (Side(balboa=False), Side(balboa=False)),
    }
    return {cell: run_pair(scenario, schedule, *sides[cell]) for cell in CELLS}


def probe_trials(trials=1_000_000, seed=0, psk=b"shared secret k, 32 bytes long..",
                 master_secret=bytes(48)):
    """Classify ``trials`` first records from clients that do not hold ``psk``.

    Each probe marks a random tag with its own guess of the client signaling
    key; returns a Counter of classifications.
    """
    k_client = derive_covert_keys(master_secret, psk).k_client
    rng = np.random.default_rng(seed)
    counts = Counter()
    batch = 100_000
    for start in range(0, trials, batch):
        n = min(batch, trials - start)
        tags = rng.integers(0, 256, size=(n, 16), dtype=np.uint8)
        guesses = rng.integers(0, 256, size=(n, 16), dtype=np.uint8)
        for tag, guess in zip(_rows(tags), _rows(guesses)):
            counts[classify_first_record(mark_tag(tag, guess), tag, k_client)] += 1
    return counts


def _rows(arr):
    raw = arr.tobytes()
    w = arr.shape[1]
    return (raw[i:i + w] for i in range(0, len(raw), w))
