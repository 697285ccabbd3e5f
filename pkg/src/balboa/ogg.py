"""Ogg page framing: header layout, checksum, parsing and page construction."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

CAPTURE = b"OggS"
HEADER_FIXED_LEN = 27
VERSION_OFFSET = 4
HEADER_TYPE_OFFSET = 5
SERIAL_OFFSET = 14
CRC_OFFSET = 22
SEG_COUNT_OFFSET = 26

FLAG_CONTINUED = 0x01
FLAG_BOS = 0x02
FLAG_EOS = 0x04

_HEADER = struct.Struct("<4sBBqIIIB")

_REVERSE_BITS = bytes(int(f"{n:08b}"[::-1], 2) for n in range(256))


class MalformedOgg(ValueError):
    pass


def _bitrev32(x):
    return int(f"{x:032b}"[::-1], 2)


def ogg_crc(data, crc=0):
    """Ogg page checksum: poly 0x04C11DB7, init 0, MSB-first, no final XOR.

    Computed with zlib's reflected CRC-32 on bit-reversed input; ``crc`` lets
    callers chain over several buffers.
    """
    reg = _bitrev32(crc) ^ 0xFFFFFFFF
    raw = zlib.crc32(bytes(data).translate(_REVERSE_BITS), reg) ^ 0xFFFFFFFF
    return _bitrev32(raw)


@dataclass
class OggPageHeader:
    version: int
    header_type: int
    granule: int
    serial: int
    page_seq: int
    crc: int
    seg_table: bytes

    @property
    def header_len(self):
        return HEADER_FIXED_LEN + len(self.seg_table)

    @property
    def body_len(self):
        return sum(self.seg_table)

    @property
    def bos(self):
        return bool(self.header_type & FLAG_BOS)

    @property
    def eos(self):
        return bool(self.header_type & FLAG_EOS)

    def pack(self, crc=None, version=None, serial=None):
        return _HEADER.pack(
            CAPTURE,
            self.version if version is None else version,
            self.header_type, self.granule,
            self.serial if serial is None else serial,
            self.page_seq,
            self.crc if crc is None else crc,
            len(self.seg_table)) + bytes(self.seg_table)


def header_needed(prefix):
    """Header length once the segment count byte is visible, else None."""
    if len(prefix) <= SEG_COUNT_OFFSET:
        return None
    return HEADER_FIXED_LEN + prefix[SEG_COUNT_OFFSET]


def parse_header(buf):
    """Parse a complete page header from the start of ``buf``."""
    if len(buf) < HEADER_FIXED_LEN:
        raise MalformedOgg("truncated page header")
    capture, version, htype, granule, serial, seq, crc, nsegs = _HEADER.unpack_from(buf)
    if capture != CAPTURE:
        raise MalformedOgg("bad capture pattern")
    if len(buf) < HEADER_FIXED_LEN + nsegs:
        raise MalformedOgg("truncated segment table")
    return OggPageHeader(version, htype, granule, serial, seq, crc,
                         bytes(buf[HEADER_FIXED_LEN:HEADER_FIXED_LEN + nsegs]))


def page_crc(header: OggPageHeader, body, version=0):
    """Checksum of the page as it would appear with ``version`` and crc zeroed."""
    return ogg_crc(body, ogg_crc(header.pack(crc=0, version=version)))


def iter_pages(data):
    """Yield (offset, header, body) for each page; raise MalformedOgg on bad framing."""
    view = memoryview(data)
    pos = 0
    n = len(data)
    while pos < n:
        header = parse_header(view[pos:pos + HEADER_FIXED_LEN + 255])
        start = pos + header.header_len
        end = start + header.body_len
        if end > n:
            raise MalformedOgg("truncated page body")
        yield pos, header, bytes(view[start:end])
        pos = end


def segment_table(body_len, continued_tail=False):
    """Lacing values for a body; ``continued_tail`` leaves the last packet open."""
    full, rem = divmod(body_len, 255)
    if continued_tail:
        if rem:
            raise ValueError("an open packet must end on a 255-byte lacing boundary")
        return bytes([255] * full)
    return bytes([255] * full + [rem])


def build_page(body, serial, page_seq, granule=0, header_type=0, seg_table=None,
               version=0):
    """Serialize one page with a correct checksum."""
    if seg_table is None:
        seg_table = segment_table(len(body))
    if sum(seg_table) != len(body) or len(seg_table) > 255:
        raise ValueError("segment table does not describe body")
    header = OggPageHeader(version, header_type, granule, serial, page_seq, 0,
                           bytes(seg_table))
    crc = page_crc(header, body, version=version)
    return header.pack(crc=crc) + bytes(body)
