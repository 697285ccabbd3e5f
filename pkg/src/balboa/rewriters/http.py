"""HTTP/1.x response-body rewriting against a shared asset directory.

Both ends parse the request stream and the response stream and pair them in
FIFO order.  The server swaps the body of a response whose bytes are exactly a
modeled asset (or a modeled byte range of one) for a covert frame and marks the
response by setting the third byte of the blank line after the headers to
``0xff``; the client recognises the marker and puts the asset back.

Any parse failure leaves that direction untouched for the rest of the
connection.
"""

from __future__ import annotations

import collections
import logging
import re
from dataclasses import dataclass, field

from ..covert import MIN_CAPACITY, BadLength, CovertQueue, Rewriter, decode_frame, encode_frame
from ..model import NotFound, RangeError, WebAssetModel, lookup_asset, normalize_uri

log = logging.getLogger(__name__)

MARKER = 0xFF
MAX_HEAD = 64 * 1024

_HEAD, _FIXED, _CHUNK_SIZE, _CHUNK_DATA, _CHUNK_CRLF, _TRAILER, _LOST = range(7)

_REQUEST_LINE = re.compile(rb"([!#$%&'*+.^_`|~0-9A-Za-z-]+) (\S+) (HTTP/\d\.\d)\Z")
_STATUS_LINE = re.compile(rb"(HTTP/\d\.\d) (\d{3})(?: .*)?\Z", re.S)
_CONTENT_RANGE = re.compile(rb"\s*bytes\s+(\d+)-(\d+)/(\d+)\s*\Z", re.I)


class ParseError(ValueError):
    pass


@dataclass
class Request:
    verb: str
    uri: str
    version: str
    headers: dict = field(default_factory=dict)


def _parse_headers(lines):
    headers = {}
    for line in lines:
        name, sep, value = line.partition(b":")
        if not sep or not name or name != name.strip():
            raise ParseError(f"bad header line {line[:40]!r}")
        key = name.decode("latin-1").lower()
        value = value.strip().decode("latin-1")
        headers[key] = headers[key] + ", " + value if key in headers else value
    return headers


def parse_request(head):
    """Parse a request head (without the blank line)."""
    lines = bytes(head).split(b"\r\n")
    m = _REQUEST_LINE.match(lines[0])
    if not m:
        raise ParseError(f"bad request line {lines[0][:60]!r}")
    verb, uri, version = (g.decode("latin-1") for g in m.groups())
    return Request(verb, uri, version, _parse_headers([l for l in lines[1:] if l]))


def parse_status(head):
    lines = bytes(head).split(b"\r\n")
    m = _STATUS_LINE.match(lines[0])
    if not m:
        raise ParseError(f"bad status line {lines[0][:60]!r}")
    return int(m.group(2)), _parse_headers([l for l in lines[1:] if l])


def content_range(headers):
    value = headers.get("content-range")
    if value is None:
        return None
    m = _CONTENT_RANGE.match(value.encode("latin-1"))
    if not m:
        raise ParseError(f"bad Content-Range {value!r}")
    start, end, total = (int(g) for g in m.groups())
    if end < start or end >= total:
        raise ParseError(f"bad Content-Range {value!r}")
    return start, end, total


def _content_length(headers):
    value = headers.get("content-length")
    if value is None:
        return None
    if not value.isdigit():
        raise ParseError(f"bad Content-Length {value!r}")
    return int(value)


def _chunked(headers):
    te = headers.get("transfer-encoding", "")
    return "chunked" in te.lower()


class _MessageStream:
    """One direction's HTTP/1.x framing.  Heads are scanned per byte, bodies per slice."""

    accepts_marker = False

    def __init__(self):
        self.state = _HEAD
        self.head = bytearray()
        self.remaining = 0
        self._line = bytearray()
        self._sep_seen = False
        self.lookahead = b""
        self.error = None

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
            if state == _HEAD:
                pos = self._head_bytes(data, pos, out, active)
            elif state == _FIXED or state == _CHUNK_DATA:
                take = min(self.remaining, n - pos)
                out += self.body(data[pos:pos + take])
                self.remaining -= take
                pos += take
                if self.remaining == 0:
                    if state == _FIXED:
                        self.message_done()
                        self._reset()
                    else:
                        self.state = _CHUNK_CRLF
                        self.remaining = 2
            elif state == _CHUNK_CRLF:
                take = min(self.remaining, n - pos)
                out += data[pos:pos + take]
                self.remaining -= take
                pos += take
                if self.remaining == 0:
                    self.state = _CHUNK_SIZE
            else:
                pos = self._line_bytes(data, pos, out)
        return bytes(out)

    def _lose(self, why):
        self.error = str(why)
        log.info("http stream lost sync: %s", why)
        self.state = _LOST

    def _reset(self):
        self.state = _HEAD
        self.head = bytearray()

    def _head_bytes(self, data, pos, out, active):
        n = len(data)
        head = self.head
        marker_ok = self.accepts_marker and active
        while pos < n:
            b = data[pos]
            pos += 1
            head.append(b)
            if self._sep_seen:
                out.append(b)
                if b != 10:
                    self._lose("blank line not terminated by LF")
                    return pos
                self._sep_seen = False
                try:
                    self.head_done(bytes(head[:-4]))
                except ParseError as exc:
                    self._lose(exc)
                return pos
            size = len(head)
            if size >= 3 and head[-3] == 13 and head[-2] == 10 \
                    and (b == 13 or (b == MARKER and marker_ok)):
                if size == 3:
                    self._lose("message starts with an empty line")
                    out.append(b)
                    return pos
                self.lookahead = data[pos:]
                try:
                    out.append(self.separator(bytes(head[:-3]), b, active))
                except ParseError as exc:
                    self._lose(exc)
                    out.append(b)
                    return pos
                self._sep_seen = True
                continue
            out.append(b)
            if size >= 2 and head[-2] == 10 and b == 10:
                self._lose("bare LF in head")
                return pos
            if size > MAX_HEAD:
                self._lose("head too long")
                return pos
        return pos

    def _line_bytes(self, data, pos, out):
        """Chunk-size and trailer lines, passed through unchanged."""
        end = data.find(b"\n", pos)
        stop = len(data) if end < 0 else end + 1
        out += data[pos:stop]
        self._line += data[pos:stop]
        if len(self._line) > MAX_HEAD:
            self._lose("chunk line too long")
            return stop
        if end < 0:
            return stop
        line = bytes(self._line).rstrip(b"\r\n")
        self._line = bytearray()
        if self.state == _CHUNK_SIZE:
            size_text = line.split(b";", 1)[0].strip()
            try:
                size = int(size_text, 16)
            except ValueError:
                self._lose(f"bad chunk size {size_text!r}")
                return stop
            if size == 0:
                self.state = _TRAILER
            else:
                self.state = _CHUNK_DATA
                self.remaining = size
        elif not line:
            self.message_done()
            self._reset()
        return stop

    def start_body(self, headers, no_body):
        """Pick the body framing once the head is complete."""
        if no_body:
            self.message_done()
            self._reset()
        elif _chunked(headers):
            self.state = _CHUNK_SIZE
            self._line = bytearray()
        else:
            length = _content_length(headers)
            if length is None:
                self.close_delimited()
            elif length == 0:
                self.message_done()
                self._reset()
            else:
                self.state = _FIXED
                self.remaining = length

    def close_delimited(self):
        self._lose("body runs to connection close")

    # hooks

    def separator(self, head, byte, active):
        return byte

    def head_done(self, head):
        pass

    def body(self, chunk):
        return chunk

    def message_done(self):
        pass


class RequestStream(_MessageStream):
    """Parses requests and queues them for the response side; output is unchanged."""

    def __init__(self, exchanges):
        super().__init__()
        self.exchanges = exchanges
        self.requests = 0

    def head_done(self, head):
        req = parse_request(head)
        self.exchanges.append(req)
        self.requests += 1
        self.start_body(req.headers, False)

    def close_delimited(self):
        # a request without framing headers has no body
        self.message_done()
        self._reset()


class ResponseStream(_MessageStream):
    """Response framing plus the hooks both the rewriting and restoring sides share."""

    def __init__(self, model: WebAssetModel, queue: CovertQueue, exchanges):
        super().__init__()
        self.model = model
        self.queue = queue
        self.exchanges = exchanges
        self.request = None
        self.status = None
        self.headers = None
        self.response_bytes = 0
        self.stats = {"responses": 0, "response_bytes": 0}

    def process(self, data, active):
        if self.state != _LOST:
            self.stats["response_bytes"] += len(data)
        return super().process(data, active)

    def _parse(self, head):
        if not self.exchanges:
            raise ParseError("response without a request")
        status, headers = parse_status(head)
        self.status, self.headers = status, headers
        self.request = self.exchanges[0]
        if status >= 200:
            self.exchanges.popleft()
        self.stats["responses"] += 1
        return status, headers

    def _no_body(self):
        return (self.request.verb == "HEAD" or 100 <= self.status < 200
                or self.status in (204, 304))

    def expected_slice(self):
        """(uri, range-or-None, body length) if the body is a modeled asset, else None."""
        req, headers = self.request, self.headers
        if req.verb != "GET" or _chunked(headers):
            return None
        if headers.get("content-encoding", "identity").lower() != "identity":
            return None
        length = _content_length(headers)
        uri = normalize_uri(req.uri)
        asset = self.model.assets.get(uri)
        if asset is None:
            return None
        if self.status == 200 and length == len(asset):
            return uri, None, length
        if self.status == 206:
            rng = content_range(headers)
            if rng is None:
                return None
            start, end, total = rng
            span = end - start + 1
            if total == len(asset) and (length is None or length == span):
                return uri, (start, span), span
        return None


class ResponseRewriter(ResponseStream):
    """Server side: replaces modeled bodies with covert frames."""

    def __init__(self, model, queue, exchanges):
        super().__init__(model, queue, exchanges)
        self._frame = None
        self._chosen = 0
        self._offset = 0
        self.stats.update(rewritten=0, replaced_bytes=0, payload_bytes=0)

    def separator(self, head, byte, active):
        status, headers = self._parse(head)
        self._frame = None
        self._chosen = 0
        if not active or self._no_body():
            return byte
        chosen = self.expected_slice()
        if chosen is None or chosen[2] < MIN_CAPACITY or _content_length(headers) is None:
            return byte
        if not self._prefix_matches(chosen):
            log.info("visible body differs from asset %s, not rewriting", chosen[0])
            return byte
        self._chosen = chosen[2]
        return MARKER

    def _prefix_matches(self, chosen):
        """Compare whatever body bytes this write already holds against the asset."""
        seen = self.lookahead[1:1 + chosen[2]]
        if not seen:
            return True
        uri, rng, _ = chosen
        start = rng[0] if rng else 0
        asset = self.model.assets[uri]
        return asset[start:start + len(seen)] == seen

    def head_done(self, head):
        # covert bytes leave the queue only once the marked head is complete
        if self._chosen:
            before = self.queue.sent
            self._frame = encode_frame(self.queue, self._chosen)
            self._offset = 0
            self.stats["payload_bytes"] += self.queue.sent - before
            self.stats["rewritten"] += 1
            self.stats["replaced_bytes"] += self._chosen
            self._chosen = 0
        self.start_body(self.headers, self._no_body())

    def body(self, chunk):
        if self._frame is None:
            return chunk
        out = self._frame[self._offset:self._offset + len(chunk)]
        self._offset += len(chunk)
        return out

    def message_done(self):
        self._frame = None


class ResponseRestorer(ResponseStream):
    """Client side: recognises the marker and puts the asset back."""

    accepts_marker = True

    def __init__(self, model, queue, exchanges):
        super().__init__(model, queue, exchanges)
        self._asset = None
        self._frame = bytearray()
        self._offset = 0
        self._marked = False
        self.stats.update(restored=0, degraded=0, frame_errors=0, payload_bytes=0)

    def separator(self, head, byte, active):
        self._parse(head)
        self._marked = active and byte == MARKER
        return 13 if self._marked else byte

    def head_done(self, head):
        self._asset = None
        if self._marked:
            self._restore_target()
        self.start_body(self.headers, self._no_body())

    def _restore_target(self):
        req = self.request
        length = _content_length(self.headers)
        try:
            rng = None
            if self.status == 206:
                start, end, _ = content_range(self.headers)
                rng = (start, end - start + 1)
            asset = lookup_asset(self.model, req.uri, rng)
        except (NotFound, RangeError, ParseError, TypeError) as exc:
            self.stats["degraded"] += 1
            log.warning("marked response cannot be restored: %r", exc)
            return
        if length != len(asset):
            self.stats["degraded"] += 1
            log.warning("marked response length %s does not match asset %d", length, len(asset))
            return
        self._asset = asset
        self._frame = bytearray()
        self._offset = 0

    def body(self, chunk):
        if self._asset is None:
            return chunk
        self._frame += chunk
        out = self._asset[self._offset:self._offset + len(chunk)]
        self._offset += len(chunk)
        return out

    def message_done(self):
        if self._asset is not None:
            self.stats["restored"] += 1
            try:
                payload = decode_frame(self._frame, self.queue)
                self.stats["payload_bytes"] += len(payload)
            except BadLength as exc:
                self.stats["frame_errors"] += 1
                log.warning("covert frame dropped: %s", exc)
        self._asset = None
        self._marked = False


class HttpRewriter(Rewriter):
    """Covert data flows server to client; ``role`` picks which half this end runs."""

    def __init__(self, model: WebAssetModel, queue: CovertQueue, role):
        self.role = getattr(role, "value", role)
        exchanges = collections.deque()
        self.requests = RequestStream(exchanges)
        if self.role == "server":
            self.responses = ResponseRewriter(model, queue, exchanges)
        elif self.role == "client":
            self.responses = ResponseRestorer(model, queue, exchanges)
        else:
            raise ValueError(f"unknown role {role!r}")

    def outgoing(self, data, active):
        if self.role == "client":
            return self.requests.process(data, active)
        return self.responses.process(data, active)

    def incoming(self, data, active):
        if self.role == "client":
            return self.responses.process(data, active)
        return self.requests.process(data, active)

    def stats(self):
        return {"http": dict(self.responses.stats), "requests": self.requests.requests}
