import random
import threading

import pytest
from hypothesis import given, strategies as st

from balboa.covert import (BadLength, CapacityTooSmall, CovertQueue, IdentityRewriter,
                           decode_frame, encode_frame)


def test_empty_queue_frame():
    assert encode_frame(CovertQueue(), 10) == bytes(10)


def test_small_payload_frame():
    assert encode_frame(CovertQueue(b"HI"), 8) == b"\x00\x00\x00\x02HI\x00\x00"


def test_saturated_frame():
    data = bytes(range(100))
    q = CovertQueue(data)
    frame = encode_frame(q, 20)
    assert frame == b"\x00\x00\x00\x10" + data[:16]
    assert q.pending() == 84 and q.sent == 16


def test_capacity_too_small():
    q = CovertQueue(b"abc")
    with pytest.raises(CapacityTooSmall):
        encode_frame(q, 4)
    assert q.pending() == 3


def test_decode_zero_and_max():
    assert decode_frame(bytes(12)) == b""
    assert decode_frame(b"\x00\x00\x00\x03abc") == b"abc"


def test_decode_bad_length():
    with pytest.raises(BadLength):
        decode_frame(b"\x00\x00\x00\x09abc")
    with pytest.raises(BadLength):
        decode_frame(b"\x00\x00")


@given(data=st.binary(max_size=300), caps=st.lists(st.integers(5, 64), min_size=1, max_size=30))
def test_frames_round_trip(data, caps):
    tx, rx = CovertQueue(data), CovertQueue()
    for c in caps:
        frame = encode_frame(tx, c)
        assert len(frame) == c
        decode_frame(frame, rx)
    got = rx.drain()
    assert got == data[:len(got)] and len(got) == tx.sent == rx.received


def test_queue_producer_consumer():
    q = CovertQueue()
    payload = random.Random(1).randbytes(50000)

    def consume(out):
        while len(out) < len(payload):
            out += q.drain(timeout=1)

    got = bytearray()
    t = threading.Thread(target=consume, args=(got,))
    t.start()
    for i in range(0, len(payload), 777):
        q.deliver(payload[i:i + 777])
    t.join(5)
    assert bytes(got) == payload


def test_identity_rewriter():
    r = IdentityRewriter()
    assert r.outgoing(b"abc", True) == b"abc"
    assert r.incoming(b"abc", False) == b"abc"
    assert r.stats() == {}
