"""Scenario corpus: seeded audio and web sessions with their shared models."""

from __future__ import annotations

import functools
import random
from dataclasses import dataclass

from .. import ogg
from ..model import WebAssetModel, load_audio_model
from ..rewriters.http import HttpRewriter
from ..rewriters.ogg import OggRewriter
from ..tls.suites import CipherSuite
from .synth import CLIENT, SERVER, SyntheticSession

RECORD_PLAINTEXT = 16384
ICECAST_HEAD = (b"HTTP/1.0 200 OK\r\nContent-Type: application/ogg\r\n"
                b"icy-name: desk radio\r\nCache-Control: no-cache\r\n\r\n")


def records_of(data, size=RECORD_PLAINTEXT):
    return [data[i:i + size] for i in range(0, len(data), size)] or [b""]


@dataclass
class Scenario:
    name: str
    kind: str                       # "audio" or "web"
    suite: CipherSuite
    mode: str
    model: object
    events: list                    # (sender, [record plaintexts]) in wire order
    seed: int = 0
    notes: str = ""

    def rewriter(self, role, queue):
        if self.kind == "audio":
            return OggRewriter(self.model, queue)
        return HttpRewriter(self.model, queue, role)

    @functools.cached_property
    def session(self):
        return SyntheticSession(seed=self.seed, suite=self.suite)

    @functools.cached_property
    def baseline(self):
        """(sender, wire bytes) per application write, handshake first."""
        s = SyntheticSession(seed=self.seed, suite=self.suite)
        flights = list(s.handshake())
        for sender, plaintexts in self.events:
            flights.append((sender, b"".join(s.app_record(sender, p) for p in plaintexts)))
        return flights

    def plaintext(self, sender):
        return b"".join(b"".join(p) for who, p in self.events if who == sender)


# audio


def _audio_model(seed, total, body_range):
    rng = random.Random(f"audio-model-{seed}")
    pages = [ogg.build_page(b"\x01vorbis" + rng.randbytes(23), 0x0BA1B0A0, 0,
                            header_type=ogg.FLAG_BOS)]
    size = 0
    seq = 1
    while size < total:
        body = rng.randbytes(rng.randint(*body_range))
        pages.append(ogg.build_page(body, 0x0BA1B0A0, seq, granule=seq * 1024))
        size += len(body)
        seq += 1
    file_bytes = b"".join(pages)
    return file_bytes, load_audio_model(file_bytes)


def _paginate(model, start, stop, serial, rng, body_range, continued=False, first_seq=0,
              ident=b"\x01vorbis-header"):
    """A logical stream whose non-header page bodies are model slices [start, stop)."""
    data = model.body_stream
    pages = [ogg.build_page(ident, serial, first_seq, header_type=ogg.FLAG_BOS)]
    seq = first_seq + 1
    pos = start
    open_packet = False
    while pos < stop:
        size = rng.randint(*body_range)
        if continued:
            size = max(255, size // 255 * 255)
        size = min(size, stop - pos)
        body = data[pos:pos + size]
        htype = ogg.FLAG_CONTINUED if open_packet else 0
        tail_open = continued and size % 255 == 0 and rng.random() < 0.7
        table = ogg.segment_table(size, continued_tail=tail_open)
        pages.append(ogg.build_page(body, serial, seq, granule=seq * 960, header_type=htype,
                                    seg_table=table))
        open_packet = tail_open
        pos += size
        seq += 1
    pages.append(ogg.build_page(b"", serial, seq, granule=seq * 960, header_type=ogg.FLAG_EOS))
    return b"".join(pages)


def audio_scenario(name, suite, mode, seed, stream_len, body_range, continued=False,
                   chained=False):
    _, model = _audio_model(seed, stream_len + 20000, (2500, 5000))
    rng = random.Random(f"audio-stream-{name}")
    start = rng.randint(0, 8000)
    if chained:
        mid = start + stream_len // 2
        stream = (_paginate(model, start, mid, 0x11111111, rng, body_range, continued)
                  + _paginate(model, mid, start + stream_len, 0x22222222, rng, body_range,
                              continued))
    else:
        stream = _paginate(model, start, start + stream_len, 0x5EED0001, rng, body_range,
                           continued)
    request = b"GET /stream.ogg HTTP/1.0\r\nHost: radio.example\r\nIcy-MetaData: 0\r\n\r\n"
    events = [(CLIENT, [request])]
    # the server writes its response head on its own, then audio in full records
    events.append((SERVER, [ICECAST_HEAD]))
    events += [(SERVER, [rec]) for rec in records_of(stream)]
    return Scenario(name, "audio", suite, mode, model, events, seed)


# web


def _response(status, headers, body, reason=b"OK"):
    head = b"HTTP/1.1 %d %s\r\n" % (status, reason)
    head += b"".join(b"%s: %s\r\n" % (k.encode(), str(v).encode()) for k, v in headers)
    head += b"Server: Apache\r\n\r\n"
    return head + body


def _request(uri, extra=()):
    lines = [b"GET %s HTTP/1.1" % uri.encode(), b"Host: www.example.org",
             b"User-Agent: Mozilla/5.0", b"Accept: */*"]
    lines += [b"%s: %s" % (k.encode(), v.encode()) for k, v in extra]
    return b"\r\n".join(lines) + b"\r\n\r\n"


def _chunked(body, piece=4096):
    out = b"".join(b"%x\r\n%s\r\n" % (len(body[i:i + piece]), body[i:i + piece])
                   for i in range(0, len(body), piece))
    return out + b"0\r\n\r\n"


def web_mixed(seed=11):
    rng = random.Random(f"web-mixed-{seed}")
    assets = {}
    for i in range(6):
        assets[f"/index{i}.html"] = rng.randbytes(rng.randint(2000, 9000))
    for i in range(8):
        assets[f"/static/s{i}.css"] = rng.randbytes(rng.randint(800, 4000))
    for i in range(8):
        assets[f"/img/p{i}.jpg"] = rng.randbytes(rng.randint(8000, 30000))
    model = WebAssetModel.from_mapping(assets)
    events = []
    uris = sorted(assets)
    rng.shuffle(uris)
    for n, uri in enumerate(uris):
        body = assets[uri]
        events.append((CLIENT, [_request(uri, [("Cookie", f"sid={n:08x}")])]))
        if n % 7 == 3:
            resp = _response(200, [("Transfer-Encoding", "chunked")], _chunked(body))
        else:
            resp = _response(200, [("Content-Length", len(body)),
                                   ("Content-Type", "application/octet-stream")], body)
        events.append((SERVER, records_of(resp)))
        if n % 5 == 0:
            events.append((CLIENT, [_request(f"/missing{n}.js")]))
            events.append((SERVER, [_response(404, [("Content-Length", 9)], b"not found",
                                              b"Not Found")]))
        if n % 6 == 1:
            events.append((CLIENT, [_request(uri, [("If-None-Match", '"abc"')])]))
            events.append((SERVER, [_response(304, [("ETag", '"abc"')], b"",
                                              b"Not Modified")]))
    return Scenario("web-mixed", "web", CipherSuite.AES_128_GCM, "setting2", model, events, seed)


def web_large(seed=12):
    rng = random.Random(f"web-large-{seed}")
    blob = rng.randbytes(160_000)
    model = WebAssetModel.from_mapping({"/downloads/tool.bin": blob})
    resp = _response(200, [("Content-Length", len(blob)),
                           ("Content-Type", "application/octet-stream")], blob)
    events = [(CLIENT, [_request("/downloads/tool.bin")]), (SERVER, records_of(resp))]
    return Scenario("web-large", "web", CipherSuite.AES_256_GCM, "setting1", model, events, seed)


def web_ranges(seed=13):
    rng = random.Random(f"web-ranges-{seed}")
    video = rng.randbytes(120_000)
    page = rng.randbytes(6000)
    model = WebAssetModel.from_mapping({"/media/clip.webm": video, "/watch.html": page})
    events = []
    # three pipelined requests in one write, responses back to back
    spans = [(0, 19_999), (20_000, 59_999), (60_000, 60_009)]
    reqs = [_request("/watch.html")]
    resps = [_response(200, [("Content-Length", len(page))], page)]
    for a, b in spans:
        reqs.append(_request("/media/clip.webm#t=1", [("Range", f"bytes={a}-{b}")]))
        resps.append(_response(206, [("Content-Range", f"bytes {a}-{b}/{len(video)}"),
                                     ("Content-Length", b - a + 1)], video[a:b + 1],
                               b"Partial Content"))
    events.append((CLIENT, [b"".join(reqs)]))
    events.append((SERVER, records_of(b"".join(resps))))
    # a range that disagrees with the model's length passes through
    events.append((CLIENT, [_request("/media/clip.webm", [("Range", "bytes=100-199")])]))
    events.append((SERVER, [_response(206, [("Content-Range", "bytes 100-199/999999"),
                                            ("Content-Length", 100)], video[100:200],
                                      b"Partial Content")]))
    a, b = 60_010, 119_999
    events.append((CLIENT, [_request("/media/clip.webm", [("Range", f"bytes={a}-")])]))
    events.append((SERVER, records_of(_response(
        206, [("Content-Range", f"bytes {a}-{b}/{len(video)}"), ("Content-Length", b - a + 1)],
        video[a:b + 1], b"Partial Content"))))
    return Scenario("web-ranges", "web", CipherSuite.CHACHA20_POLY1305, "setting1", model,
                    events, seed)


@functools.lru_cache(maxsize=None)
def corpus():
    return [
        audio_scenario("audio-aes128", CipherSuite.AES_128_GCM, "setting1", 1, 120_000,
                       (3000, 4500)),
        audio_scenario("audio-aes256-continued", CipherSuite.AES_256_GCM, "setting1", 2,
                       120_000, (2000, 6000), continued=True),
        audio_scenario("audio-chacha-small-pages", CipherSuite.CHACHA20_POLY1305, "setting1", 3,
                       60_000, (300, 900)),
        audio_scenario("audio-chained-setting2", CipherSuite.AES_128_GCM, "setting2", 4,
                       120_000, (3000, 4500), chained=True),
        web_mixed(),
        web_large(),
        web_ranges(),
    ]


def scenario(name):
    for sc in corpus():
        if sc.name == name:
            return sc
    raise KeyError(name)
