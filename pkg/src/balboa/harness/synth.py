"""Seeded TLS 1.2 transcripts built with library AEAD, no live TLS stack."""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305

from ..tls import handshake as hs
from ..tls.aead import record_aad, record_nonce
from ..tls.keys import SessionSecrets, derive_direction_keys
from ..tls.record import ALERT, APPLICATION_DATA, CHANGE_CIPHER_SPEC, HANDSHAKE
from ..tls.suites import SUITE_CODES, CipherSuite

TLS12 = 0x0303
CLIENT = "client"
SERVER = "server"


def record_header(ctype, length, version=TLS12):
    return struct.pack(">BHH", ctype, version, length)


def signing_key(seed):
    """A deterministic P-256 key; the same seed always gives the same key."""
    scalar = random.Random(f"sign-{seed}").getrandbits(255) % (2 ** 255 - 19) + 1
    return ec.derive_private_key(scalar, ec.SECP256R1())


def public_pem(private_key):
    return private_key.public_key().public_bytes(
        serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo)


def aead_seal(suite, keys, seq, ctype, plaintext, explicit=None, version=TLS12):
    """One protected record, header included."""
    if suite.is_gcm:
        explicit = explicit if explicit is not None else struct.pack(">Q", seq)
        nonce = record_nonce(suite, keys.implicit_iv, explicit, seq)
        aead = AESGCM(keys.aead_key)
    else:
        explicit = b""
        nonce = record_nonce(suite, keys.implicit_iv, b"", seq)
        aead = ChaCha20Poly1305(keys.aead_key)
    aad = record_aad(seq, ctype, version, len(plaintext))
    body = explicit + aead.encrypt(nonce, bytes(plaintext), aad)
    return record_header(ctype, len(body), version) + body


def aead_open(suite, keys, seq, record):
    """Plaintext of one protected record, or None when the tag fails."""
    ctype, version, length = struct.unpack_from(">BHH", record)
    body = record[5:5 + length]
    en = suite.explicit_nonce_len
    explicit, ct = body[:en], body[en:]
    nonce = record_nonce(suite, keys.implicit_iv, explicit, seq)
    aad = record_aad(seq, ctype, version, len(ct) - 16)
    aead = AESGCM(keys.aead_key) if suite.is_gcm else ChaCha20Poly1305(keys.aead_key)
    try:
        return aead.decrypt(nonce, ct, aad)
    except Exception:
        return None


def split_records(stream):
    """Split a wire stream into whole records; a trailing fragment is dropped."""
    out = []
    pos = 0
    while pos + 5 <= len(stream):
        length = int.from_bytes(stream[pos + 3:pos + 5], "big")
        if pos + 5 + length > len(stream):
            break
        out.append(bytes(stream[pos:pos + 5 + length]))
        pos += 5 + length
    return out


@dataclass
class SyntheticSession:
    """Deterministic secrets plus a record writer for each side.

    Every call to :meth:`app_record` advances that side's sequence number, so
    records must be requested in wire order per direction.
    """

    seed: int = 0
    suite: CipherSuite = CipherSuite.AES_128_GCM
    server_key: object = None
    ske_scheme: int = 0x0403
    secrets: SessionSecrets = field(init=False)

    def __post_init__(self):
        rng = random.Random(self.seed)
        self.secrets = SessionSecrets(rng.randbytes(48), rng.randbytes(32), rng.randbytes(32),
                                      self.suite)
        self._rng = rng
        if self.server_key is None:
            self.server_key = signing_key(self.seed)
        self.client_write, self.server_write = derive_direction_keys(self.secrets)
        self.seq = {CLIENT: 0, SERVER: 0}

    @property
    def client_random(self):
        return self.secrets.client_random

    @property
    def master_secret(self):
        return self.secrets.master_secret

    def secret_source(self, client_random):
        return self.master_secret if client_random == self.client_random else None

    def keys_for(self, sender):
        return self.client_write if sender == CLIENT else self.server_write

    # handshake

    def client_hello(self):
        codes = b"".join(struct.pack(">H", c) for c in SUITE_CODES.values())
        body = (struct.pack(">H", TLS12) + self.client_random + b"\x00"
                + struct.pack(">H", len(codes)) + codes + b"\x01\x00")
        return hs.encode_message(hs.CLIENT_HELLO, body)

    def server_flight_messages(self):
        code = SUITE_CODES[self.suite]
        sh = hs.encode_message(hs.SERVER_HELLO, struct.pack(">H", TLS12) + self.secrets.server_random
                               + b"\x00" + struct.pack(">HB", code, 0))
        cert = hs.encode_message(hs.CERTIFICATE, b"\x00\x00\x00")
        eph = ec.derive_private_key(self._rng.getrandbits(200) + 1, ec.SECP256R1())
        point = eph.public_key().public_bytes(serialization.Encoding.X962,
                                              serialization.PublicFormat.UncompressedPoint)
        params = b"\x03\x00\x17" + bytes([len(point)]) + point
        signed = self.client_random + self.secrets.server_random + params
        sig = self.server_key.sign(signed, ec.ECDSA(hashes.SHA256(), deterministic_signing=True))
        ske = hs.encode_message(hs.SERVER_KEY_EXCHANGE,
                                params + struct.pack(">HH", self.ske_scheme, len(sig)) + sig)
        done = hs.encode_message(hs.SERVER_HELLO_DONE, b"")
        return sh + cert + ske + done

    def plain_record(self, ctype, payload):
        return record_header(ctype, len(payload)) + payload

    def finished(self, sender):
        ccs = self.plain_record(CHANGE_CIPHER_SPEC, b"\x01")
        self.seq[sender] = 0
        verify = random.Random(f"fin-{self.seed}-{sender}").randbytes(12)
        return ccs + self.app_record(sender, hs.encode_message(hs.FINISHED, verify), HANDSHAKE)

    def handshake(self):
        """The full handshake as (sender, wire bytes) flights."""
        cke = hs.encode_message(hs.CLIENT_KEY_EXCHANGE, b"\x41" + bytes(65))
        return [
            (CLIENT, self.plain_record(HANDSHAKE, self.client_hello())),
            (SERVER, self.plain_record(HANDSHAKE, self.server_flight_messages())),
            (CLIENT, self.plain_record(HANDSHAKE, cke) + self.finished(CLIENT)),
            (SERVER, self.finished(SERVER)),
        ]

    # records

    def app_record(self, sender, plaintext, ctype=APPLICATION_DATA):
        seq = self.seq[sender]
        self.seq[sender] = seq + 1
        return aead_seal(self.suite, self.keys_for(sender), seq, ctype, plaintext)

    def alert(self, sender, description=0):
        return self.app_record(sender, bytes([1, description]), ALERT)
