"""Ogg page rewriting for audio streams.

The sending side swaps the body of every page it can find in the shared
:class:`~balboa.model.AudioModel` for a covert frame, sets the page version to
``*`` and stores the model offset in the serial-number field.  The receiving
side puts the model bytes and the learned serial back.

The stream may start with an HTTP response head (as Icecast sends it); that is
skipped up to the blank line.  Anything that is neither a response head nor an
Ogg page loses sync and the direction is left untouched from then on.
"""

from __future__ import annotations

import logging
import struct

from .. import ogg
from ..covert import MIN_CAPACITY, BadLength, CovertQueue, Rewriter, decode_frame, encode_frame
from ..model import AudioModel, find_candidates

log = logging.getLogger(__name__)

MARKER = 0x2A
MIN_PREFIX = 16
MAX_PREFIX = 64
MAX_CANDIDATES = 64

_SNIFF, _HEAD, _HEADER, _BODY, _LOST = range(5)
_HTTP = b"HTTP/"
_SERIAL = range(ogg.SERIAL_OFFSET, ogg.SERIAL_OFFSET + 4)


class _PageTracker:
    """Shared framing: sniff, skip an HTTP head, then walk page headers and bodies."""

    def __init__(self):
        self.state = _SNIFF
        self._sniff = bytearray()
        self._tail = b""
        self.hdr = bytearray()
        self.header_len = None
        self.header = None
        self.body_pos = 0
        self.stats = {"pages": 0, "body_bytes": 0}

    def process(self, data, active):
        data = bytes(data)
        out = bytearray()
        pos = 0
        n = len(data)
        while pos < n:
            state = self.state
            if state == _LOST:
                out += data[pos:]
                break
            if state == _SNIFF:
                pos = self._do_sniff(data, pos, out)
            elif state == _HEAD:
                pos = self._do_head(data, pos, out)
            elif state == _HEADER:
                pos = self._do_header(data, pos, out, active)
            else:
                take = min(self.header.body_len - self.body_pos, n - pos)
                out += self.emit_body(data[pos:pos + take], self.body_pos)
                self.body_pos += take
                pos += take
                if self.body_pos == self.header.body_len:
                    self.page_done()
                    self._next_page()
        return bytes(out)

    def _do_sniff(self, data, pos, out):
        b = data[pos]
        self._sniff.append(b)
        out.append(b)
        s = bytes(self._sniff)
        if _HTTP.startswith(s) and len(s) < len(_HTTP):
            return pos + 1
        if s == _HTTP:
            self.state = _HEAD
            return pos + 1
        if ogg.CAPTURE.startswith(s):
            if len(s) == len(ogg.CAPTURE):
                self.hdr = bytearray(s)
                self.state = _HEADER
            return pos + 1
        self.state = _LOST
        return pos + 1

    def _do_head(self, data, pos, out):
        window = self._tail + data[pos:]
        i = window.find(b"\r\n\r\n")
        if i < 0:
            out += data[pos:]
            self._tail = window[-3:]
            return len(data)
        end = pos + i + 4 - len(self._tail)
        out += data[pos:end]
        self._next_page()
        return end

    def _next_page(self):
        self.state = _HEADER
        self.hdr = bytearray()
        self.header_len = None
        self.header = None
        self.body_pos = 0

    def _do_header(self, data, pos, out, active):
        idx = len(self.hdr)
        if idx < len(ogg.CAPTURE):
            take = min(len(ogg.CAPTURE) - idx, len(data) - pos)
            chunk = data[pos:pos + take]
            if ogg.CAPTURE[idx:idx + take] != chunk:
                self.state = _LOST
                return pos
            self.hdr += chunk
            out += chunk
            return pos + take
        if idx == ogg.VERSION_OFFSET:
            self.decide(data[pos:], active)
        limit = self.header_len if self.header_len is not None else ogg.HEADER_FIXED_LEN
        take = min(limit - idx, len(data) - pos)
        chunk = data[pos:pos + take]
        self.hdr += chunk
        out += self.emit_header(chunk, idx)
        pos += take
        if self.header_len is None and len(self.hdr) == ogg.HEADER_FIXED_LEN:
            self.header_len = ogg.header_needed(self.hdr)
        if self.header_len is not None and len(self.hdr) == self.header_len:
            self.header = ogg.parse_header(self.hdr)
            self.stats["pages"] += 1
            self.stats["body_bytes"] += self.header.body_len
            self.header_done()
            if self.header.body_len == 0:
                self.page_done()
                self._next_page()
            else:
                self.state = _BODY
        return pos

    # hooks

    def decide(self, lookahead, active):
        pass

    def emit_header(self, chunk, idx):
        return chunk

    def header_done(self):
        pass

    def emit_body(self, chunk, offset):
        return chunk

    def page_done(self):
        pass


def _patch(chunk, idx, patch):
    if not patch:
        return chunk
    end = idx + len(chunk)
    piece = None
    for where, value in patch.items():
        if idx <= where < end:
            if piece is None:
                piece = bytearray(chunk)
            piece[where - idx] = value
    return chunk if piece is None else bytes(piece)


class OggSender(_PageTracker):
    """Outgoing half: decides per page at its version byte."""

    def __init__(self, model: AudioModel, queue: CovertQueue):
        super().__init__()
        self.model = model
        self.queue = queue
        self.last_serial = None
        self.hint = None
        self._frame = None
        self._patch = None
        self.stats.update(rewritten_pages=0, replaced_bytes=0, payload_bytes=0, undecided=0)

    def decide(self, lookahead, active):
        self._frame = self._patch = None
        if not active:
            return
        offset = self._confirm(bytes(self.hdr) + lookahead)
        if offset is None:
            return
        body_len = self._pending_header.body_len
        before = self.queue.sent
        self._frame = encode_frame(self.queue, body_len)
        self.stats["payload_bytes"] += self.queue.sent - before
        self._patch = {ogg.VERSION_OFFSET: MARKER}
        for i, b in zip(_SERIAL, struct.pack("<I", offset)):
            self._patch[i] = b
        self.hint = offset + body_len

    def _confirm(self, buf):
        need = ogg.header_needed(buf)
        if need is None or len(buf) < need:
            self.stats["undecided"] += 1
            return None
        header = ogg.parse_header(buf)
        self._pending_header = header
        body_len = header.body_len
        if header.version != 0 or header.bos or header.eos or body_len < MIN_CAPACITY:
            return None
        if header.serial != self.last_serial:
            return None
        visible = buf[need:need + body_len]
        if len(visible) < min(MIN_PREFIX, body_len):
            self.stats["undecided"] += 1
            return None
        data = self.model.body_stream
        confirmed = None
        for off in find_candidates(self.model, visible[:MAX_PREFIX], self.hint)[:MAX_CANDIDATES]:
            if off + body_len > len(data):
                continue
            body = data[off:off + body_len]
            if body[:len(visible)] != visible or ogg.page_crc(header, body) != header.crc:
                continue
            if confirmed is None:
                confirmed = off
            elif data[confirmed:confirmed + body_len] != body:
                return None
        return confirmed

    def emit_header(self, chunk, idx):
        return _patch(chunk, idx, self._patch)

    def header_done(self):
        if self._frame is None:
            self.last_serial = self.header.serial
        else:
            self.stats["rewritten_pages"] += 1
            self.stats["replaced_bytes"] += self.header.body_len

    def emit_body(self, chunk, offset):
        if self._frame is None:
            return chunk
        return self._frame[offset:offset + len(chunk)]

    def page_done(self):
        self._frame = self._patch = None


class OggReceiver(_PageTracker):
    """Incoming half: restores marked pages from the model."""

    def __init__(self, model: AudioModel, queue: CovertQueue):
        super().__init__()
        self.model = model
        self.queue = queue
        self.stream_serial = 0
        self._marked = False
        self._offset = None
        self._frame = bytearray()
        self._crc = 0
        self.stats.update(restored_pages=0, degraded_pages=0, crc_mismatches=0,
                          frame_errors=0, payload_bytes=0)

    def emit_header(self, chunk, idx):
        if idx <= ogg.VERSION_OFFSET < idx + len(chunk):
            self._marked = self._active and chunk[ogg.VERSION_OFFSET - idx] == MARKER
        if not self._marked:
            return chunk
        patch = {ogg.VERSION_OFFSET: 0}
        for i, b in zip(_SERIAL, struct.pack("<I", self.stream_serial)):
            patch[i] = b
        return _patch(chunk, idx, patch)

    def decide(self, lookahead, active):
        self._active = active

    def header_done(self):
        header = self.header
        self._offset = None
        if not self._marked:
            self.stream_serial = header.serial
            return
        offset = header.serial
        if offset + header.body_len > self.model.total_len:
            self.stats["degraded_pages"] += 1
            log.warning("marked page points past the model (offset %d, body %d)",
                        offset, header.body_len)
            return
        self._offset = offset
        self._frame = bytearray()
        restored = ogg.OggPageHeader(0, header.header_type, header.granule, self.stream_serial,
                                     header.page_seq, header.crc, header.seg_table)
        self._crc = ogg.ogg_crc(restored.pack(crc=0))

    def emit_body(self, chunk, offset):
        if self._offset is None:
            return chunk
        self._frame += chunk
        start = self._offset + offset
        restored = self.model.body_stream[start:start + len(chunk)]
        self._crc = ogg.ogg_crc(restored, self._crc)
        return restored

    def page_done(self):
        if self._offset is None:
            self._marked = False
            return
        self.stats["restored_pages"] += 1
        if self._crc != self.header.crc:
            self.stats["crc_mismatches"] += 1
        try:
            payload = decode_frame(self._frame, self.queue)
            self.stats["payload_bytes"] += len(payload)
        except BadLength as exc:
            self.stats["frame_errors"] += 1
            log.warning("covert frame dropped: %s", exc)
        self._offset = None
        self._marked = False


class OggRewriter(Rewriter):
    def __init__(self, model: AudioModel, queue: CovertQueue):
        self.sender = OggSender(model, queue)
        self.receiver = OggReceiver(model, queue)

    def outgoing(self, data, active):
        return self.sender.process(data, active)

    def incoming(self, data, active):
        return self.receiver.process(data, active)

    def stats(self):
        return {"ogg_out": dict(self.sender.stats), "ogg_in": dict(self.receiver.stats)}
