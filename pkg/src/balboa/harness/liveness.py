"""Exhaustive small-schedule check of the acknowledged (setting 2) handshake.

Each direction is a chain of record writes and reads (a read never precedes
its write); every merge of the two chains is one full-duplex schedule.  For
each schedule both pipelines are driven from scratch and checked: every
application-facing record must open under the standard keys with the
original plaintext, and each side must end active exactly when the server
wrote at least one record after reading the client's signal.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..covert import IdentityRewriter
from ..session import Connection
from ..tls.suites import CipherSuite
from .synth import CLIENT, SERVER, SyntheticSession, aead_open

PSK = b"liveness check pre-shared key..."


def _chains(n):
    """Orderings of n writes ("w", i) and n reads ("r", i) with r_i after w_i."""
    def rec(w, r, acc):
        if w == n and r == n:
            yield tuple(acc)
            return
        if w < n:
            yield from rec(w + 1, r, acc + [("w", w)])
        if r < w:
            yield from rec(w, r + 1, acc + [("r", r)])
    return list(rec(0, 0, []))


def _merges(a, b):
    if not a:
        yield tuple(b)
        return
    if not b:
        yield tuple(a)
        return
    for rest in _merges(a[1:], b):
        yield (a[0],) + rest
    for rest in _merges(a, b[1:]):
        yield (b[0],) + rest


def duplex_schedules(n_client, n_server):
    """All schedules as tuples of (side, "w"|"r", index); side is the record's sender."""
    for cc in _chains(n_client):
        for sc in _chains(n_server):
            yield from _merges(tuple((CLIENT,) + e for e in cc),
                               tuple((SERVER,) + e for e in sc))


@dataclass
class LivenessResult:
    schedules: int = 0
    failures: list = None

    @property
    def ok(self):
        return self.schedules > 0 and not self.failures


def _fresh(seed, suite):
    session = SyntheticSession(seed=seed, suite=suite)
    ends = {role: Connection(role, "setting2", PSK, session.secret_source,
                             rewriter=IdentityRewriter(),
                             pinned_key=session.server_key.public_key())
            for role in (CLIENT, SERVER)}
    for sender, data in session.handshake():
        receiver = SERVER if sender == CLIENT else CLIENT
        ends[receiver].incoming(ends[sender].outgoing(data))
    return session, ends


def check_schedule(schedule, n_client, n_server, seed=5, suite=CipherSuite.AES_128_GCM):
    """Returns None when the schedule behaves, else a description of the fault."""
    session, ends = _fresh(seed, suite)
    counts = {CLIENT: n_client, SERVER: n_server}
    first_seq = dict(session.seq)
    plain = {who: [f"{who} record {i}".encode() * 3 for i in range(counts[who])]
             for who in counts}
    records = {who: [session.app_record(who, p) for p in plain[who]] for who in counts}
    wire = {CLIENT: {}, SERVER: {}}
    signal_read = False
    ack_written = False
    for sender, op, i in schedule:
        receiver = SERVER if sender == CLIENT else CLIENT
        if op == "w":
            wire[sender][i] = ends[sender].outgoing(records[sender][i])
            if sender == SERVER and signal_read:
                ack_written = True
        else:
            app = ends[receiver].incoming(wire[sender][i])
            opened = aead_open(suite, session.keys_for(sender), first_seq[sender] + i, app)
            if opened != plain[sender][i]:
                return f"{sender} record {i} not restored"
            if sender == CLIENT and i == 0:
                signal_read = True
    for role, conn in ends.items():
        want = "active" if ack_written else ("await-ack" if role == CLIENT else "send-ack")
        if conn.signal.phase.value != want:
            return f"{role} ended {conn.signal.phase.value}, expected {want}"
    return None


def check_all(n_client=2, n_server=2, **kwargs):
    result = LivenessResult(failures=[])
    for schedule in duplex_schedules(n_client, n_server):
        result.schedules += 1
        fault = check_schedule(schedule, n_client, n_server, **kwargs)
        if fault:
            result.failures.append((schedule, fault))
    return result
