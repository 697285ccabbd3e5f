"""Incremental AEAD primitives for TLS 1.2 records.

An :class:`AeadStream` encrypts or decrypts one record a chunk at a time, in
record order, and yields the 16-byte tag once every payload byte has been
presented.  Decryption never authenticates on its own: the caller compares the
tag from :meth:`AeadStream.finalize` with whatever arrived on the wire.
"""

from __future__ import annotations

import functools
import struct

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.poly1305 import Poly1305

from .suites import TAG_LEN, CipherSuite

MAX_PLAINTEXT = 2 ** 14 + 256

_ZEROS = bytes(16)


@functools.lru_cache(maxsize=64)
def _aesgcm(key):
    return AESGCM(key)


def record_nonce(suite, implicit_iv, explicit_nonce, seq_num):
    if suite.is_gcm:
        return implicit_iv + explicit_nonce
    padded = struct.pack(">4xQ", seq_num)
    return bytes(a ^ b for a, b in zip(implicit_iv, padded))


def record_aad(seq_num, content_type, version, plaintext_len):
    return struct.pack(">QBHH", seq_num, content_type, version, plaintext_len)


class AeadStream:
    """One record's worth of AEAD state, opened or sealed incrementally.

    ``mode`` is ``"open"`` (input is ciphertext) or ``"seal"`` (input is
    plaintext).  Either way the tag covers the ciphertext side.  ``scratch``,
    when given, must hold at least the record's plaintext length.
    """

    __slots__ = ("suite", "mode", "_ks", "_aad", "_nonce", "_key", "_buf",
                 "_fill", "_mac", "_ct_len")

    def __init__(self, suite: CipherSuite, key, nonce, aad, mode="open", scratch=None):
        if mode not in ("open", "seal"):
            raise ValueError(mode)
        self.suite = suite
        self.mode = mode
        self._aad = bytes(aad)
        self._nonce = bytes(nonce)
        self._key = bytes(key)
        self._ct_len = 0
        if suite.is_gcm:
            # Counter block 1 is reserved for the tag mask.
            self._ks = Cipher(algorithms.AES(self._key),
                              modes.CTR(self._nonce + b"\x00\x00\x00\x02")).encryptor()
            # Callers on the hot path hand in a reusable buffer.
            self._buf = scratch if scratch is not None else bytearray(MAX_PLAINTEXT)
            self._fill = 0
            self._mac = None
        else:
            otk = Cipher(algorithms.ChaCha20(self._key, bytes(4) + self._nonce),
                         None).encryptor().update(bytes(32))
            self._ks = Cipher(algorithms.ChaCha20(self._key, b"\x01\x00\x00\x00" + self._nonce),
                              None).encryptor()
            self._mac = Poly1305(otk)
            self._mac.update(self._aad)
            self._mac.update(_ZEROS[:-len(self._aad) % 16])
            self._buf = None
            self._fill = 0

    def update(self, data):
        """XOR ``data`` with the next keystream bytes and absorb it into the tag."""
        out = self._ks.update(data)
        n = len(data)
        if self._mac is not None:
            self._mac.update(data if self.mode == "open" else out)
        else:
            plain = out if self.mode == "open" else data
            end = self._fill + n
            if end > len(self._buf):
                raise OverflowError("record plaintext exceeds the TLS bound")
            self._buf[self._fill:end] = plain
            self._fill = end
        self._ct_len += n
        return out

    def open_byte(self, byte):
        return self.update(bytes((byte,)))[0]

    seal_byte = open_byte

    def finalize(self):
        if self._mac is None:
            # The GCM tag over ciphertext C equals the tag of re-encrypting the
            # matching plaintext under the same key and nonce.
            sealed = _aesgcm(self._key).encrypt(
                self._nonce, memoryview(self._buf)[:self._fill], self._aad)
            return sealed[-TAG_LEN:]
        self._mac.update(_ZEROS[:-self._ct_len % 16])
        self._mac.update(struct.pack("<QQ", len(self._aad), self._ct_len))
        return self._mac.finalize()
