import random

import pytest
from hypothesis import given, settings, strategies as st

from balboa import ogg
from balboa.covert import CovertQueue
from balboa.harness import corpus
from balboa.rewriters.ogg import MARKER, OggRewriter

SERIAL = 0x5EED0001


@pytest.fixture(scope="module")
def setup():
    _, model = corpus._audio_model(2, 120000, (2500, 5000))
    stream = corpus._paginate(model, 3000, 100000, SERIAL, random.Random(1), (2000, 6000))
    return model, stream


def pair(model, covert=b""):
    tx_q, rx_q = CovertQueue(covert), CovertQueue()
    return OggRewriter(model, tx_q), OggRewriter(model, rx_q), tx_q, rx_q


def split(data, sizes):
    pos = 0
    for n in sizes:
        if pos >= len(data):
            return
        yield data[pos:pos + n]
        pos += n
    if pos < len(data):
        yield data[pos:]


def test_round_trip_and_marking(setup):
    model, stream = setup
    secret = random.Random(2).randbytes(30000)
    tx, rx, tx_q, rx_q = pair(model, secret)
    wire = tx.outgoing(stream, True)
    assert len(wire) == len(stream) and wire != stream
    pages = list(ogg.iter_pages(wire))
    orig = list(ogg.iter_pages(stream))
    assert [h.body_len for _, h, _ in pages] == [h.body_len for _, h, _ in orig]
    marked = [h for _, h, _ in pages if h.version == MARKER]
    assert marked and all(not h.bos and not h.eos for h in marked)
    assert rx.incoming(wire, True) == stream
    assert rx_q.drain() == secret[:tx_q.sent]
    s = rx.stats()["ogg_in"]
    assert s["restored_pages"] == len(marked) and s["crc_mismatches"] == 0


def test_offsets_in_serial_point_into_model(setup):
    model, stream = setup
    tx, _, _, _ = pair(model)
    wire = tx.outgoing(stream, True)
    for (_, h, _), (_, oh, body) in zip(ogg.iter_pages(wire), ogg.iter_pages(stream)):
        if h.version == MARKER:
            assert model.body_stream[h.serial:h.serial + oh.body_len] == body


@settings(max_examples=25, deadline=None)
@given(cuts=st.lists(st.integers(1, 5000), max_size=60))
def test_receiver_chunking_independent(setup, cuts):
    model, stream = setup
    tx, rx, tx_q, rx_q = pair(model, b"z" * 5000)
    wire = tx.outgoing(stream, True)
    out = b"".join(rx.incoming(c, True) for c in split(wire, cuts))
    assert out == stream and rx_q.drain() == b"z" * tx_q.sent


def test_sender_split_at_record_boundaries(setup):
    model, stream = setup
    whole_tx, *_ = pair(model, b"q" * 9000)
    whole = whole_tx.outgoing(stream, True)
    tx, *_ = pair(model, b"q" * 9000)
    recs = b"".join(tx.outgoing(r, True) for r in corpus.records_of(stream))
    # the sender needs the page header plus 16 body bytes in one call; records
    # can cut pages, so some pages may be left alone but the output still restores
    assert len(recs) == len(whole)
    _, rx, _, _ = pair(model)
    assert rx.incoming(recs, True) == stream


def test_inactive_is_identity(setup):
    model, stream = setup
    tx, rx, tx_q, _ = pair(model, b"abc")
    assert tx.outgoing(stream, False) == stream
    assert tx_q.pending() == 3
    marked_wire = pair(model, b"x")[0].outgoing(stream, True)
    # an inactive (standard-key) record is never restored even if it looks marked
    assert rx.incoming(marked_wire, False) == marked_wire


def test_unmodeled_pages_pass(setup):
    model, _ = setup
    rng = random.Random(3)
    foreign = b"".join(ogg.build_page(rng.randbytes(3000), 9, i) for i in range(5))
    tx, *_ = pair(model, b"data")
    assert tx.outgoing(foreign, True) == foreign


def test_http_head_skipped(setup):
    model, stream = setup
    head = b"HTTP/1.0 200 OK\r\nContent-Type: application/ogg\r\n\r\n"
    tx, rx, *_ = pair(model, b"x" * 100)
    wire = tx.outgoing(head + stream, True)
    assert wire[:len(head)] == head and wire != head + stream
    assert rx.incoming(wire, True) == head + stream


@pytest.mark.parametrize("junk", [b"GET / HTTP/1.0\r\n\r\n", b"\x00" * 100, b"OggX" + bytes(60)])
def test_bad_stream_loses_sync(setup, junk):
    model, stream = setup
    tx, rx, *_ = pair(model, b"x" * 100)
    assert tx.outgoing(junk + stream, True) == junk + stream
    assert rx.incoming(junk + stream, True) == junk + stream


def test_degraded_page_offset_out_of_range(setup):
    model, stream = setup
    body = b"\x00\x00\x00\x00" + bytes(100)
    page = ogg.build_page(body, 0xFFFFFFF0, 5, version=MARKER)
    lead = ogg.build_page(b"lead body bytes!" * 4, SERIAL, 4)
    _, rx, _, _ = pair(model)
    out = rx.incoming(lead + page, True)
    assert len(out) == len(lead + page)
    assert rx.stats()["ogg_in"]["degraded_pages"] == 1


def test_short_bodies_not_rewritten(setup):
    model, _ = setup
    lead = ogg.build_page(model.body_stream[:3000], SERIAL, 1)
    tiny = ogg.build_page(model.body_stream[3000:3004], SERIAL, 2)
    tx, *_ = pair(model, b"x" * 100)
    wire = tx.outgoing(lead + tiny, True)
    pages = [h.version for _, h, _ in ogg.iter_pages(wire)]
    assert pages == [0, 0]    # lead has no prior serial; tiny is below capacity
