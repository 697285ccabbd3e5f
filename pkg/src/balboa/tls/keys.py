"""Session key material: key-log ingestion, TLS 1.2 key expansion, covert keys."""

from __future__ import annotations

import hmac
import re
from dataclasses import dataclass

import blake3

from .suites import CipherSuite

MASTER_SECRET_LEN = 48
RANDOM_LEN = 32
SIGNAL_KEY_LEN = 16

REENC_CONTEXT = "balboa-reenc"
CLIENT_CONTEXT = "balboa-client"
SERVER_CONTEXT = "balboa-server"


class KeylogError(ValueError):
    pass


class BadLabel(KeylogError):
    pass


class BadHexLength(KeylogError):
    pass


class BadHexDigit(KeylogError):
    pass


_HEX = re.compile(rb"[0-9a-fA-F]*\Z")


def parse_keylog_line(line):
    """Parse ``CLIENT_RANDOM <64 hex> <96 hex>`` into (client_random, master_secret)."""
    if isinstance(line, str):
        line = line.encode("ascii", "replace")
    line = line.rstrip(b"\r\n")
    label, sep, rest = line.partition(b" ")
    if label != b"CLIENT_RANDOM" or not sep:
        raise BadLabel(label.decode("ascii", "replace"))
    fields = rest.split(b" ")
    if len(fields) != 2:
        raise BadHexLength("expected two hex fields")
    random_hex, secret_hex = fields
    if len(random_hex) != 2 * RANDOM_LEN or len(secret_hex) != 2 * MASTER_SECRET_LEN:
        raise BadHexLength(f"{len(random_hex)}/{len(secret_hex)} hex digits")
    if not (_HEX.match(random_hex) and _HEX.match(secret_hex)):
        raise BadHexDigit("non-hex character")
    return bytes.fromhex(random_hex.decode()), bytes.fromhex(secret_hex.decode())


def format_keylog_line(client_random, master_secret):
    return f"CLIENT_RANDOM {client_random.hex()} {master_secret.hex()}\n"


@dataclass(frozen=True)
class SessionSecrets:
    master_secret: bytes
    client_random: bytes
    server_random: bytes
    suite: CipherSuite

    def __post_init__(self):
        if len(self.master_secret) != MASTER_SECRET_LEN:
            raise ValueError("master secret must be 48 bytes")
        if len(self.client_random) != RANDOM_LEN or len(self.server_random) != RANDOM_LEN:
            raise ValueError("randoms must be 32 bytes")


@dataclass(frozen=True)
class DirectionKeys:
    aead_key: bytes
    implicit_iv: bytes


def p_hash(hash_factory, secret, seed, length):
    out = bytearray()
    a = seed
    while len(out) < length:
        a = hmac.new(secret, a, hash_factory).digest()
        out += hmac.new(secret, a + seed, hash_factory).digest()
    return bytes(out[:length])


def prf(secret, label, seed, length, hash_factory):
    """The TLS 1.2 PRF: P_<hash>(secret, label + seed)."""
    return p_hash(hash_factory, secret, label + seed, length)


def key_block(secrets: SessionSecrets):
    suite = secrets.suite
    # AEAD suites have zero-length MAC keys.
    length = 2 * (suite.key_len + suite.iv_len)
    return prf(secrets.master_secret, b"key expansion",
               secrets.server_random + secrets.client_random,
               length, suite.hash_factory)


def derive_direction_keys(secrets: SessionSecrets):
    """Return (client_write, server_write) keys for an AEAD suite."""
    suite = secrets.suite
    block = key_block(secrets)
    k, v = suite.key_len, suite.iv_len
    client_key, server_key = block[:k], block[k:2 * k]
    client_iv, server_iv = block[2 * k:2 * k + v], block[2 * k + v:2 * k + 2 * v]
    return DirectionKeys(client_key, client_iv), DirectionKeys(server_key, server_iv)


@dataclass(frozen=True)
class CovertKeys:
    k_prime: bytes   # 32 bytes; truncated to the suite key length when used
    k_client: bytes
    k_server: bytes

    def reenc_key(self, suite: CipherSuite):
        return self.k_prime[:suite.key_len]


def _kdf(context, material, length):
    return blake3.blake3(material, derive_key_context=context).digest(length=length)


def derive_covert_keys(master_secret, psk):
    if not psk:
        raise ValueError("pre-shared key must be non-empty")
    material = bytes(master_secret) + bytes(psk)
    return CovertKeys(
        k_prime=_kdf(REENC_CONTEXT, material, 32),
        k_client=_kdf(CLIENT_CONTEXT, material, SIGNAL_KEY_LEN),
        k_server=_kdf(SERVER_CONTEXT, material, SIGNAL_KEY_LEN),
    )
