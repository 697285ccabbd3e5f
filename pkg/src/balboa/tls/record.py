"""Incremental TLS 1.2 record-layer rewriting.

A :class:`RecordStream` handles one direction of one connection.  It accepts
wire bytes in arbitrary chunks and returns exactly as many bytes as it was
given.  Record headers, explicit nonces and every non-Application-Data record
are copied verbatim.  Application Data payloads are opened under one key,
handed to a rewriter, and sealed under another; the tag is emitted
positionally and corrupted in its final byte if the incoming tag did not
verify.

Which keys and rewriter apply to a record is decided by the stream's owner
(see :mod:`balboa.session`) when the record header completes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

from .aead import MAX_PLAINTEXT, AeadStream, record_aad, record_nonce
from .keys import DirectionKeys
from .suites import TAG_LEN, CipherSuite

log = logging.getLogger(__name__)

CHANGE_CIPHER_SPEC = 20
ALERT = 21
HANDSHAKE = 22
APPLICATION_DATA = 23

HEADER_LEN = 5
MAX_RECORD_LEN = 2 ** 14 + 2048
ZERO_MASK = bytes(TAG_LEN)

# phases
_HEADER, _VERBATIM, _NONCE, _PAYLOAD, _TAG = range(5)


class StateCorrupt(Exception):
    pass


@dataclass
class RecordPlan:
    """How to treat one Application Data record.

    ``seal_keys`` of None means the ciphertext is forwarded unchanged (the
    rewriter still sees the plaintext, with ``active`` False).  The emitted tag
    is the tag over the emitted ciphertext XOR ``out_mask``.  The incoming tag
    is accepted if it equals the opened tag XOR any of ``accept_masks``;
    ``on_done`` receives the matching mask, or None when none matched.
    """

    suite: CipherSuite
    open_keys: DirectionKeys
    seal_keys: Optional[DirectionKeys]
    rewrite: Callable
    active: bool
    out_mask: bytes = ZERO_MASK
    accept_masks: tuple = (ZERO_MASK,)
    on_done: Optional[Callable] = None


def _xor(a, b):
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


class RecordStream:
    """Per-direction record parser and rewriter.

    ``owner`` must provide ``plan_record(stream, ctype, version, length)``
    returning a :class:`RecordPlan` or None, ``observe_handshake(stream,
    data)`` for cleartext handshake payload, and ``fail(reason)``.
    """

    def __init__(self, direction, owner):
        self.direction = direction
        self.owner = owner
        self.passthrough = False
        self.encrypted = False
        self.seq_num = 0
        self.records = 0
        self.app_data_seen = False
        self.ended = None
        self._phase = _HEADER
        self._hdr = bytearray()
        self._remaining = 0
        self._observe_hs = False
        self._ccs = False
        self._plan = None
        self._nonce = bytearray()
        self._open = None
        self._seal = None
        self._tag_out = b""
        self._wire_tag = bytearray()
        self._scratch_open = bytearray(MAX_PLAINTEXT)
        self._scratch_seal = bytearray(MAX_PLAINTEXT)
        # outgoing retry cache
        self._pending_in = bytearray()
        self._pending_out = bytearray()

    # public entry points

    def process(self, data):
        """Transform the next ``len(data)`` wire bytes; output has equal length."""
        data = bytes(data)
        n = len(data)
        out = bytearray()
        pos = 0
        while pos < n:
            if self.passthrough:
                out += data[pos:]
                break
            try:
                pos = self._step(data, pos, out)
            except Exception as exc:  # contained: never reaches the host application
                log.warning("%s stream entering passthrough: %r", self.direction, exc)
                self.owner.fail(f"{type(exc).__name__}: {exc}")
                self.passthrough = True
                # output is position-aligned with input; drop the failed step's bytes
                del out[pos:]
                out += data[pos:]
                break
        return bytes(out)

    def prepare_write(self, buf):
        """Output for a write() of ``buf`` at the current unsent stream position.

        Bytes already transformed but not yet accepted by the kernel are served
        from the cache so the covert payload is not consumed twice.
        """
        buf = bytes(buf)
        cached = len(self._pending_in)
        overlap = min(cached, len(buf))
        if self._pending_in[:overlap] != buf[:overlap]:
            self.owner.fail("write retry changed already-transformed bytes")
            self.passthrough = True
            self._pending_in.clear()
            self._pending_out.clear()
            return buf
        if len(buf) > cached:
            fresh = buf[cached:]
            self._pending_in += fresh
            self._pending_out += self.process(fresh)
        return bytes(self._pending_out[:len(buf)])

    def commit_write(self, accepted):
        if accepted > 0:
            del self._pending_in[:accepted]
            del self._pending_out[:accepted]

    # state machine

    def _step(self, data, pos, out):
        phase = self._phase
        if phase == _HEADER:
            take = min(HEADER_LEN - len(self._hdr), len(data) - pos)
            chunk = data[pos:pos + take]
            self._hdr += chunk
            out += chunk
            pos += take
            if len(self._hdr) == HEADER_LEN:
                self._start_record()
            return pos

        if phase == _VERBATIM:
            take = min(self._remaining, len(data) - pos)
            chunk = data[pos:pos + take]
            out += chunk
            if self._observe_hs:
                self.owner.observe_handshake(self, chunk)
            self._remaining -= take
            if self._remaining == 0:
                self._finish_record()
            return pos + take

        if phase == _NONCE:
            take = min(self._remaining, len(data) - pos)
            chunk = data[pos:pos + take]
            self._nonce += chunk
            out += chunk
            self._remaining -= take
            if self._remaining == 0:
                self._start_crypto()
            return pos + take

        if phase == _PAYLOAD:
            take = min(self._remaining, len(data) - pos)
            chunk = data[pos:pos + take]
            plan = self._plan
            plain = self._open.update(chunk)
            rewritten = plan.rewrite(plain, plan.active)
            if self._seal is not None:
                out += self._seal.update(rewritten)
            else:
                out += chunk
            self._remaining -= take
            if self._remaining == 0:
                self._finish_payload()
            return pos + take

        # _TAG
        take = min(self._remaining, len(data) - pos)
        start = TAG_LEN - self._remaining
        self._wire_tag += data[pos:pos + take]
        self._remaining -= take
        if self._remaining:
            out += self._tag_out[start:start + take]
        else:
            matched = self._match_tag()
            emitted = self._tag_out[start:]
            if matched is None:
                emitted = emitted[:-1] + bytes([emitted[-1] ^ 0xFF])
            out += emitted
            self._finish_record(matched)
        return pos + take

    def _start_record(self):
        ctype, major, minor = self._hdr[0], self._hdr[1], self._hdr[2]
        version = (major << 8) | minor
        length = int.from_bytes(self._hdr[3:5], "big")
        self._hdr.clear()
        if ctype not in (CHANGE_CIPHER_SPEC, ALERT, HANDSHAKE, APPLICATION_DATA) \
                or major != 3 or length > MAX_RECORD_LEN:
            raise StateCorrupt(f"bad record header type={ctype} version={version:#x} len={length}")
        self._observe_hs = False
        self._ccs = ctype == CHANGE_CIPHER_SPEC
        if ctype == ALERT:
            # an alert ends its own direction; the other one keeps its keys
            log.info("%s stream: alert record, passthrough from here on", self.direction)
            self.passthrough = True
            self.ended = "alert"
        if ctype == HANDSHAKE and self.encrypted and self.app_data_seen:
            self.owner.fail("renegotiation")
            self.passthrough = True
        if ctype == HANDSHAKE and not self.encrypted:
            self._observe_hs = True
        self._plan = None
        if ctype == APPLICATION_DATA:
            if not self.encrypted:
                raise StateCorrupt("application data before ChangeCipherSpec")
            self.app_data_seen = True
            self._plan = self.owner.plan_record(self, ctype, version, length)
            if self.passthrough:
                self._plan = None
        self._remaining = length
        self._version = version
        self._length = length
        if self._plan is None:
            self._phase = _VERBATIM
            if length == 0:
                self._finish_record()
            return
        suite = self._plan.suite
        plain_len = length - suite.explicit_nonce_len - TAG_LEN
        if plain_len < 0 or plain_len > MAX_PLAINTEXT:
            raise StateCorrupt(f"record length {length} outside AEAD bounds")
        self._plain_len = plain_len
        self._nonce.clear()
        if suite.explicit_nonce_len:
            self._phase = _NONCE
            self._remaining = suite.explicit_nonce_len
        else:
            self._start_crypto()

    def _start_crypto(self):
        plan = self._plan
        suite = plan.suite
        explicit = bytes(self._nonce)
        aad = record_aad(self.seq_num, APPLICATION_DATA, self._version, self._plain_len)
        nonce = record_nonce(suite, plan.open_keys.implicit_iv, explicit, self.seq_num)
        self._open = AeadStream(suite, plan.open_keys.aead_key, nonce, aad, "open",
                                scratch=self._scratch_open)
        if plan.seal_keys is not None:
            seal_nonce = record_nonce(suite, plan.seal_keys.implicit_iv, explicit, self.seq_num)
            self._seal = AeadStream(suite, plan.seal_keys.aead_key, seal_nonce, aad, "seal",
                                    scratch=self._scratch_seal)
        else:
            self._seal = None
        self._phase = _PAYLOAD
        self._remaining = self._plain_len
        if self._plain_len == 0:
            self._finish_payload()

    def _finish_payload(self):
        self._expected_tag = self._open.finalize()
        tag = self._seal.finalize() if self._seal is not None else self._expected_tag
        self._tag_out = _xor(tag, self._plan.out_mask)
        self._wire_tag.clear()
        self._phase = _TAG
        self._remaining = TAG_LEN

    def _match_tag(self):
        wire = bytes(self._wire_tag)
        for mask in self._plan.accept_masks:
            if _xor(self._expected_tag, mask) == wire:
                return mask
        return None

    def _finish_record(self, matched=None):
        plan = self._plan
        self._plan = None
        self._open = self._seal = None
        self._phase = _HEADER
        self.records += 1
        if self._ccs:
            self.encrypted = True
            self.seq_num = 0
            self._ccs = False
        elif self.encrypted:
            self.seq_num += 1
        if plan is not None and plan.on_done is not None:
            plan.on_done(matched)
