"""Per-interception latency of the rewrite pipeline.

One interception is everything done for a single intercepted write or read:
parsing, decrypting, rewriting and re-encrypting the bytes it carries.  The
bench times the server's writes of full 16 KiB records, whole-record calls,
after a warm-up pass.  Scenarios are re-cut so every record is its own write.
"""

from __future__ import annotations

import dataclasses

from .corpus import RECORD_PLAINTEXT, scenario
from .pair import Side, latency_summary, run_pair
from .schedules import ChunkSchedule
from .synth import CLIENT, SERVER

FULL_RECORD = RECORD_PLAINTEXT + 5


def bench_rewrite(name, identity=False, repeat=3, direction="tx"):
    """Latency summary (µs) over the server's records in scenario ``name``.

    ``identity`` runs both ends without key material, so every record takes
    the passthrough path; ``direction`` picks the server's writes ("tx") or
    the client's reads of them ("rx").
    """
    sc = per_record_writes(scenario(name))
    side = Side(has_secret=not identity)
    run_pair(sc, ChunkSchedule(), side, side, measure=True)   # warm caches
    role = SERVER if direction == "tx" else CLIENT
    timings = []
    for _ in range(repeat):
        report = run_pair(sc, ChunkSchedule(), side, side, measure=True)
        timings += [t for t in report.timings
                    if t[2] == role and t[3] == direction and t[1] >= FULL_RECORD]
    if not timings:
        raise ValueError(f"{name}: no full-size records to time")
    return latency_summary(timings)


def per_record_writes(sc):
    events = [(who, [p]) for who, plaintexts in sc.events for p in plaintexts]
    return dataclasses.replace(sc, events=events)


BENCH_SCENARIOS = ("audio-aes128", "web-large")


def bench_all(repeat=3):
    out = {}
    for name in BENCH_SCENARIOS:
        out[name] = {
            "rewrite": bench_rewrite(name, repeat=repeat),
            "identity": bench_rewrite(name, identity=True, repeat=repeat),
        }
    return out
