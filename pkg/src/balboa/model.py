"""Pre-shared traffic models: an indexed audio byte stream and a web asset map."""

from __future__ import annotations

import bisect
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from . import ogg


def build_suffix_array(data):
    """Suffix array of ``data`` by prefix doubling; returns an int64 array."""
    n = len(data)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    rank = np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int64)
    sa = np.argsort(rank, kind="stable")
    base = max(n, 256) + 2
    k = 1
    while True:
        second = np.full(n, -1, dtype=np.int64)
        if k < n:
            second[:n - k] = rank[k:]
        key = rank * base + (second + 1)
        sa = np.argsort(key, kind="stable")
        ordered = key[sa]
        new_rank = np.empty(n, dtype=np.int64)
        new_rank[sa] = np.concatenate(([0], np.cumsum(ordered[1:] != ordered[:-1])))
        rank = new_rank
        if rank[sa[-1]] == n - 1 or k >= n:
            return sa
        k *= 2


@dataclass(frozen=True)
class AudioModel:
    body_stream: bytes
    index: np.ndarray = field(repr=False)

    @property
    def total_len(self):
        return len(self.body_stream)

    @classmethod
    def from_body_stream(cls, body_stream):
        body_stream = bytes(body_stream)
        if len(body_stream) >= 2 ** 32:
            raise ValueError("model offsets must fit in 32 bits")
        return cls(body_stream, build_suffix_array(body_stream))


def load_audio_model(file_bytes):
    """Concatenate the page bodies of an Ogg file, in file order, and index them."""
    bodies = [body for _, _, body in ogg.iter_pages(file_bytes)]
    if not bodies and file_bytes:
        raise ogg.MalformedOgg("no pages")
    return AudioModel.from_body_stream(b"".join(bodies))


def read_audio_model(path):
    with open(path, "rb") as fh:
        return load_audio_model(fh.read())


def serialize_audio_model(model, page_body=4096, serial=0):
    """Write the body stream back out as an Ogg file (inverse of load on bodies)."""
    data = model.body_stream
    pages = []
    chunks = [data[i:i + page_body] for i in range(0, len(data), page_body)] or [b""]
    for seq, chunk in enumerate(chunks):
        htype = ogg.FLAG_BOS if seq == 0 else 0
        if seq == len(chunks) - 1:
            htype |= ogg.FLAG_EOS
        pages.append(ogg.build_page(chunk, serial, seq, header_type=htype))
    return b"".join(pages)


def find_candidates(model: AudioModel, prefix, hint=None):
    """All offsets where ``prefix`` occurs in the body stream, ascending.

    When ``hint`` is one of them it is moved to the front, since streamed
    audio usually continues right where the last match ended.
    """
    if not prefix:
        raise ValueError("prefix must be non-empty")
    prefix = bytes(prefix)
    data = model.body_stream
    m = len(prefix)
    sa = model.index
    key = lambda i: data[i:i + m]  # noqa: E731
    lo = bisect.bisect_left(sa, prefix, key=key)
    hi = bisect.bisect_right(sa, prefix, lo=lo, key=key)
    offsets = sorted(sa[lo:hi].tolist())
    if hint is not None and 0 <= hint < len(data) and data[hint:hint + m] == prefix:
        offsets.remove(hint)
        offsets.insert(0, hint)
    return offsets


class NotFound(KeyError):
    pass


class RangeError(ValueError):
    pass


def normalize_uri(uri):
    """Drop the fragment and any scheme/authority; keep the query; no decoding."""
    if isinstance(uri, bytes):
        uri = uri.decode("latin-1")
    uri = uri.split("#", 1)[0]
    lower = uri[:8].lower()
    if lower.startswith("http://") or lower.startswith("https://"):
        rest = uri.split("://", 1)[1]
        slash = rest.find("/")
        uri = rest[slash:] if slash >= 0 else "/"
    return uri


@dataclass(frozen=True)
class WebAssetModel:
    assets: dict
    root_digest: str

    @classmethod
    def from_mapping(cls, mapping):
        assets = {}
        for uri, data in mapping.items():
            key = normalize_uri(uri)
            if key in assets:
                raise ValueError(f"duplicate asset after normalization: {key}")
            assets[key] = bytes(data)
        return cls(assets, _root_digest(assets))

    def manifest(self):
        return [
            {"uri": uri, "length": len(data), "sha256": hashlib.sha256(data).hexdigest()}
            for uri, data in sorted(self.assets.items())
        ]


def _root_digest(assets):
    h = hashlib.sha256()
    for uri, data in sorted(assets.items()):
        h.update(uri.encode("latin-1") + b"\0")
        h.update(hashlib.sha256(data).digest())
    return h.hexdigest()


def load_web_model(root):
    """Map every file under ``root`` to the URI ``/relative/path``."""
    mapping = {}
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, root).replace(os.sep, "/")
            with open(path, "rb") as fh:
                mapping["/" + rel] = fh.read()
    return WebAssetModel.from_mapping(mapping)


def lookup_asset(model: WebAssetModel, uri, rng=None):
    """Full asset bytes, or the ``(offset, length)`` slice of it."""
    try:
        data = model.assets[normalize_uri(uri)]
    except KeyError:
        raise NotFound(uri) from None
    if rng is None:
        return data
    offset, length = rng
    if offset < 0 or length < 0 or offset + length > len(data):
        raise RangeError(f"range {offset}+{length} exceeds asset of {len(data)} bytes")
    return data[offset:offset + length]
