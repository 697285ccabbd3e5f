"""Run two corpus sessions through both shims and show what changed where.

    python3 demos/walkthrough.py [scenario ...]
"""

import sys

from balboa.harness.corpus import scenario
from balboa.harness.pair import run_pair
from balboa.harness.schedules import ChunkSchedule
from balboa.harness.synth import SERVER, split_records


def show(name):
    sc = scenario(name)
    report = run_pair(sc, ChunkSchedule("random", 1))
    print(f"== {name} ({sc.kind}, {sc.suite.name}, {sc.mode})")
    print(f"   phases: client={report.client_phase} server={report.server_phase}")
    base = b"".join(d for who, d in sc.baseline if who == SERVER)
    recs = split_records(base)
    print(f"   server records: {len(recs)}, wire records: {report.wire_records[SERVER]}")
    print(f"   header/nonce divergences: {report.shape_divergences}")
    print(f"   application streams identical: {report.app_identical}")
    print(f"   covert bytes: {report.covert_delivered} delivered of {report.covert_embedded} sent")
    print(f"   goodput: {report.goodput:.3f}")
    # one byte flipped in flight: the application's TLS stack must reject it
    tampered = run_pair(sc, tamper=(SERVER, len(base) - 100))
    print(f"   one flipped wire byte -> invalid records at the client: "
          f"{tampered.invalid_app_records}")


if __name__ == "__main__":
    for name in sys.argv[1:] or ["audio-aes128", "web-mixed"]:
        show(name)
