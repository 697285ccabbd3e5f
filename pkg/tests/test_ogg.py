import random

import pytest

from balboa import ogg
from oracles.ogg_crc_ref import crc32_ogg, page_checksum


def random_page(rng):
    body = rng.randbytes(rng.randint(0, 3000))
    return ogg.build_page(body, rng.getrandbits(32), rng.getrandbits(32),
                          granule=rng.getrandbits(40), header_type=rng.choice([0, 1, 2, 4]))


def test_crc_matches_bitwise_oracle_on_100_pages():
    rng = random.Random(100)
    for _ in range(100):
        page = random_page(rng)
        stored = int.from_bytes(page[22:26], "little")
        assert stored == page_checksum(page)
        assert ogg.ogg_crc(page[:22] + bytes(4) + page[26:]) == stored


def test_crc_chaining_and_known_value():
    data = b"123456789"
    # CRC-32/MPEG-2 without init/final inversion (the Ogg variant) check value
    assert ogg.ogg_crc(data) == crc32_ogg(data) == 0x89A1897F
    assert ogg.ogg_crc(data[4:], ogg.ogg_crc(data[:4])) == ogg.ogg_crc(data)


def test_build_parse_round_trip():
    body = bytes(range(256)) * 3
    page = ogg.build_page(body, 0xDEADBEEF, 7, granule=12345, header_type=ogg.FLAG_BOS)
    (off, header, got), = ogg.iter_pages(page)
    assert got == body and off == 0
    assert header.serial == 0xDEADBEEF and header.page_seq == 7 and header.granule == 12345
    assert header.bos and not header.eos
    assert header.body_len == len(body) and header.header_len == 27 + 4
    assert ogg.page_crc(header, body) == header.crc


def test_segment_table_lacing():
    assert ogg.segment_table(0) == b"\x00"
    assert ogg.segment_table(255) == b"\xff\x00"
    assert ogg.segment_table(510, continued_tail=True) == b"\xff\xff"
    with pytest.raises(ValueError):
        ogg.segment_table(300, continued_tail=True)


def test_header_needed():
    page = ogg.build_page(b"x" * 600, 1, 1)
    assert ogg.header_needed(page[:26]) is None
    assert ogg.header_needed(page[:27]) == 27 + 3


@pytest.mark.parametrize("data", [b"OggT" + bytes(40), b"OggS" + bytes(10),
                                  ogg.build_page(b"abc" * 10, 1, 1)[:-3]])
def test_malformed_pages(data):
    with pytest.raises(ogg.MalformedOgg):
        list(ogg.iter_pages(data))


def test_version_changes_crc():
    page = ogg.build_page(b"hello", 1, 1)
    header = ogg.parse_header(page)
    assert ogg.page_crc(header, b"hello", version=0x2A) != header.crc
