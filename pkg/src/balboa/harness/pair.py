"""Paired runs: client and server pipelines joined by a scheduled wire.

Each application write is pushed through the sender's pipeline with the
kernel accepting a scheduled number of bytes per call (the rest is retried,
as a TLS library would), and the resulting wire bytes are read by the
receiver in scheduled chunks.  Writes are delivered in lock step, one at a
time, in scenario order.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import asdict, dataclass, field

from ..covert import CovertQueue
from ..session import Connection
from ..tls.record import APPLICATION_DATA
from .schedules import ChunkSchedule
from .synth import CLIENT, SERVER, aead_open, signing_key, split_records


@dataclass
class Side:
    """How one end is equipped: ``balboa`` False means no shim at all."""

    balboa: bool = True
    psk: bytes = b"shared secret k, 32 bytes long.."
    pinned_key: object = "session"   # "session" = the synthetic server's key
    has_secret: bool = True


@dataclass
class Report:
    scenario: str
    schedule: str
    client_phase: str = "none"
    server_phase: str = "none"
    wire_records: dict = field(default_factory=dict)
    shape_divergences: int = 0
    first_shape_divergence: object = None
    app_identical: bool = True
    first_app_divergence: object = None
    invalid_app_records: int = 0
    covert_embedded: int = 0
    covert_delivered: int = 0
    covert_match: bool = True
    covert_digest: str = ""
    body_bytes: int = 0
    replaced_bytes: int = 0
    goodput: float = 0.0
    app_digest: str = ""
    wire_digest: str = ""
    latency_us: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    # per side: did that shim hand every byte on unchanged, in both directions
    shim_verbatim: dict = field(default_factory=dict)
    timings: list = field(default_factory=list, repr=False)
    app_streams: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self):
        return (self.shape_divergences == 0 and self.app_identical
                and self.invalid_app_records == 0 and self.covert_match)

    def outcome(self):
        """The part of a report that must not depend on the chunk schedule."""
        return (self.client_phase, self.server_phase, self.covert_digest, self.covert_delivered,
                self.replaced_bytes, self.app_digest, self.wire_digest)

    def to_text(self):
        lines = [f"scenario: {self.scenario}", f"schedule: {self.schedule}",
                 f"ok: {self.ok}"]
        for key in ("client_phase", "server_phase", "shape_divergences", "app_identical",
                    "invalid_app_records", "covert_embedded", "covert_delivered",
                    "covert_match", "goodput"):
            lines.append(f"{key}: {getattr(self, key)}")
        if self.first_shape_divergence is not None:
            lines.append(f"first_shape_divergence: {self.first_shape_divergence}")
        if self.first_app_divergence is not None:
            lines.append(f"first_app_divergence: {self.first_app_divergence}")
        return "\n".join(lines)

    def to_json(self):
        data = asdict(self)
        data.pop("timings")
        data.pop("app_streams")
        data["ok"] = self.ok
        return json.dumps(data, sort_keys=True, default=str)


def covert_input(scenario, size=None):
    size = size if size is not None else 400_000
    return random.Random(f"covert-{scenario.name}").randbytes(size)


def _first_diff(a, b):
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return None if len(a) == len(b) else min(len(a), len(b))


def wire_shape(baseline, wire, explicit_nonce_len):
    """(divergences, first) over bytes outside AppData payload+tag regions."""
    base_recs = split_records(baseline)
    wire_recs = split_records(wire)
    divergences = 0
    first = None
    if len(base_recs) != len(wire_recs) or len(baseline) != len(wire):
        return 1 + abs(len(base_recs) - len(wire_recs)), ("record count or length",
                                                          len(base_recs), len(wire_recs))
    offset = 0
    for b, w in zip(base_recs, wire_recs):
        fixed = 5 + explicit_nonce_len if b[0] == APPLICATION_DATA else len(b)
        if len(b) != len(w) or b[:fixed] != w[:fixed]:
            divergences += 1
            if first is None:
                first = offset + (_first_diff(b[:fixed], w[:fixed]) or 0)
        offset += len(b)
    return divergences, first


def _app_records_valid(scenario, stream, sender):
    """Count application-facing records whose tag fails under the session keys."""
    s = scenario.session
    keys = s.keys_for(sender)
    invalid = 0
    seq = None
    for rec in split_records(stream):
        ctype = rec[0]
        if ctype == 20:
            seq = 0
            continue
        if seq is None:
            continue
        if aead_open(s.suite, keys, seq, rec) is None:
            invalid += 1
        seq += 1
    return invalid


def run_pair(scenario, schedule=ChunkSchedule(), client=Side(), server=Side(),
             covert=None, tamper=None, measure=False):
    """Drive one scenario end to end and compare against its baseline.

    ``tamper`` = (sender, absolute wire offset) flips one byte in flight.
    """
    session = scenario.session
    covert = covert_input(scenario) if covert is None else covert
    server_q = CovertQueue(covert)
    client_q = CovertQueue()
    ends = {}
    for role, side, queue in ((CLIENT, client, client_q), (SERVER, server, server_q)):
        if not side.balboa:
            ends[role] = None
            continue
        pinned = side.pinned_key
        if pinned == "session":
            pinned = session.server_key.public_key()
        source = session.secret_source if side.has_secret else (lambda cr: None)
        ends[role] = Connection(role, scenario.mode, side.psk, source,
                                rewriter=scenario.rewriter(role, queue), pinned_key=pinned)

    wire = {CLIENT: bytearray(), SERVER: bytearray()}
    app = {CLIENT: bytearray(), SERVER: bytearray()}
    base = {CLIENT: bytearray(), SERVER: bytearray()}
    timings = []
    verbatim = {CLIENT: True, SERVER: True}
    clock = time.perf_counter_ns
    for idx, (sender, data) in enumerate(scenario.baseline):
        receiver = SERVER if sender == CLIENT else CLIENT
        base[sender] += data
        tx, rx = ends[sender], ends[receiver]
        # sender: kernel accepts scheduled prefixes, the library retries the rest
        sent = bytearray()
        if tx is None:
            sent += data
        else:
            pos = 0
            for n in schedule.sizes(data, salt=2 * idx):
                t0 = clock()
                with tx.lock:
                    out = tx.prepare_write(data[pos:])
                    tx.commit_write(n)
                if measure:
                    timings.append((clock() - t0, len(data) - pos, sender, "tx"))
                sent += out[:n]
                pos += n
            verbatim[sender] &= sent == data
        if tamper is not None and tamper[0] == sender:
            at = tamper[1] - len(wire[sender])
            if 0 <= at < len(sent):
                sent[at] ^= 0x01
        wire[sender] += sent
        # receiver: scheduled reads
        if rx is None:
            app[receiver] += sent
        else:
            pos = 0
            for n in schedule.sizes(sent, salt=2 * idx + 1):
                chunk = bytes(sent[pos:pos + n])
                t0 = clock()
                with rx.lock:
                    got = rx.incoming(chunk)
                if measure:
                    timings.append((clock() - t0, n, receiver, "rx"))
                verbatim[receiver] &= got == chunk
                app[receiver] += got
                pos += n

    report = Report(scenario.name, str(schedule))
    for role in (CLIENT, SERVER):
        if ends[role] is not None:
            setattr(report, f"{role}_phase", ends[role].signal.phase.value)
            report.stats[role] = ends[role].stats()
            report.shim_verbatim[role] = verbatim[role]
    en = scenario.suite.explicit_nonce_len
    for role in (CLIENT, SERVER):
        d, first = wire_shape(bytes(base[role]), bytes(wire[role]), en)
        report.shape_divergences += d
        if first is not None and report.first_shape_divergence is None:
            report.first_shape_divergence = (role, first)
        report.wire_records[role] = len(split_records(bytes(wire[role])))
    for sender in (CLIENT, SERVER):
        receiver = SERVER if sender == CLIENT else CLIENT
        diff = _first_diff(bytes(app[receiver]), bytes(base[sender]))
        if diff is not None:
            report.app_identical = False
            if report.first_app_divergence is None:
                report.first_app_divergence = (sender, diff)
        report.invalid_app_records += _app_records_valid(scenario, bytes(app[receiver]), sender)

    delivered = client_q.drain()
    report.covert_embedded = server_q.sent
    report.covert_delivered = len(delivered)
    report.covert_match = delivered == covert[:server_q.sent]
    report.covert_digest = hashlib.sha256(delivered).hexdigest()
    report.app_streams = {role: bytes(app[role]) for role in (CLIENT, SERVER)}
    report.app_digest = hashlib.sha256(bytes(app[CLIENT]) + bytes(app[SERVER])).hexdigest()
    report.wire_digest = hashlib.sha256(bytes(wire[CLIENT]) + bytes(wire[SERVER])).hexdigest()
    if ends[SERVER] is not None:
        rs = ends[SERVER].rewriter.stats()
        if scenario.kind == "audio":
            report.body_bytes = rs["ogg_out"]["body_bytes"]
            report.replaced_bytes = rs["ogg_out"]["payload_bytes"]
        else:
            report.body_bytes = rs["http"]["response_bytes"]
            report.replaced_bytes = rs["http"]["payload_bytes"]
        report.goodput = report.replaced_bytes / report.body_bytes if report.body_bytes else 0.0
    if measure and timings:
        report.latency_us = latency_summary(timings)
        report.timings = timings
    return report


def latency_summary(timings):
    """Mean and percentiles in microseconds; entries start with nanoseconds."""
    ns = sorted(t[0] for t in timings)
    return {
        "calls": len(ns),
        "mean": sum(ns) / len(ns) / 1000,
        "p50": ns[len(ns) // 2] / 1000,
        "p99": ns[min(len(ns) - 1, int(len(ns) * 0.99))] / 1000,
        "max": ns[-1] / 1000,
    }


def plain_server_side():
    """A TLS server that is not the pinned one (no shim, different signing key)."""
    return Side(balboa=False)


def unpinned_client_side(seed=999):
    """A Balboa client configured with some other server's key."""
    return Side(pinned_key=signing_key(seed).public_key())
