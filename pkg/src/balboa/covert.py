"""Covert byte queues, per-region framing, and the plaintext rewriter contract."""

from __future__ import annotations

import struct
import threading

FRAME_HEADER_LEN = 4
MIN_CAPACITY = FRAME_HEADER_LEN + 1


class CapacityTooSmall(ValueError):
    pass


class BadLength(ValueError):
    pass


class CovertQueue:
    """Outgoing bytes awaiting embedding and incoming bytes awaiting delivery.

    Safe for one producer and one consumer on each side.
    """

    def __init__(self, outgoing=b""):
        self._out = bytearray(outgoing)
        self._in = bytearray()
        self._out_lock = threading.Lock()
        self._in_lock = threading.Condition()
        self.sent = 0
        self.received = 0

    def push(self, data):
        with self._out_lock:
            self._out += data

    def take(self, limit):
        with self._out_lock:
            chunk = bytes(self._out[:limit])
            del self._out[:limit]
        self.sent += len(chunk)
        return chunk

    def pending(self):
        return len(self._out)

    def deliver(self, data):
        if not data:
            return
        with self._in_lock:
            self._in += data
            self.received += len(data)
            self._in_lock.notify_all()

    def drain(self, timeout=None):
        """Return everything delivered so far, waiting up to ``timeout`` if empty."""
        with self._in_lock:
            if not self._in and timeout:
                self._in_lock.wait(timeout)
            data = bytes(self._in)
            self._in.clear()
            return data


def encode_frame(queue: CovertQueue, capacity):
    """Fill a region of ``capacity`` bytes: length, payload, zero padding."""
    if capacity < MIN_CAPACITY:
        raise CapacityTooSmall(capacity)
    payload = queue.take(capacity - FRAME_HEADER_LEN)
    return (struct.pack(">I", len(payload)) + payload
            + bytes(capacity - FRAME_HEADER_LEN - len(payload)))


def decode_frame(region, queue: CovertQueue | None = None):
    region = bytes(region)
    if len(region) < FRAME_HEADER_LEN:
        raise BadLength("region shorter than the frame header")
    (n,) = struct.unpack_from(">I", region)
    if n > len(region) - FRAME_HEADER_LEN:
        raise BadLength(f"payload length {n} exceeds region of {len(region)}")
    payload = region[FRAME_HEADER_LEN:FRAME_HEADER_LEN + n]
    if queue is not None:
        queue.deliver(payload)
    return payload


class Rewriter:
    """Plaintext rewriter contract.

    Both methods take the next slice of one direction's plaintext and return a
    slice of the same length.  ``active`` says whether the record carrying the
    slice travels under the covert key; when it is False the rewriter only
    tracks protocol state and must return its input unchanged.  Slices may be
    cut at any byte boundary.
    """

    def outgoing(self, data, active):
        return data

    def incoming(self, data, active):
        return data

    def stats(self):
        return {}


class IdentityRewriter(Rewriter):
    pass
