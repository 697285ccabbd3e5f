"""Every client/server pairing, plus random probes against the server's check.

    python3 demos/who_talks_to_whom.py [trials]
"""

import sys

from balboa.harness.corpus import scenario
from balboa.harness.matrix import CELLS, probe_trials, signaling_matrix

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
reports = signaling_matrix(scenario("web-large"))
plain = reports[("plain", "plain")].app_digest
print(f"{'client':>8} {'server':>8}  covert  same-as-no-shim")
for cell in CELLS:
    r = reports[cell]
    print(f"{cell[0]:>8} {cell[1]:>8}  {r.covert_delivered:>6}  {r.app_digest == plain}")

counts = probe_trials(trials=trials, seed=1)
print(f"\n{trials} probes without the pre-shared key:")
for cls, n in sorted(counts.items(), key=lambda kv: kv[0].value):
    print(f"  {cls.value:>10}: {n}")
