"""Just enough TLS 1.2 handshake parsing to learn randoms, the suite, and the
server's key-exchange signature."""

from __future__ import annotations

import struct
from dataclasses import dataclass

CLIENT_HELLO = 1
SERVER_HELLO = 2
CERTIFICATE = 11
SERVER_KEY_EXCHANGE = 12
SERVER_HELLO_DONE = 14
CLIENT_KEY_EXCHANGE = 16
FINISHED = 20


class MalformedHandshake(ValueError):
    pass


class HandshakeReader:
    """Reassembles handshake messages from record payloads."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data):
        self._buf += data
        messages = []
        while len(self._buf) >= 4:
            length = int.from_bytes(self._buf[1:4], "big")
            if len(self._buf) < 4 + length:
                break
            messages.append((self._buf[0], bytes(self._buf[4:4 + length])))
            del self._buf[:4 + length]
        return messages


def split_messages(transcript):
    out = []
    pos = 0
    while pos < len(transcript):
        if len(transcript) - pos < 4:
            raise MalformedHandshake("truncated message header")
        mtype = transcript[pos]
        length = int.from_bytes(transcript[pos + 1:pos + 4], "big")
        body = transcript[pos + 4:pos + 4 + length]
        if len(body) != length:
            raise MalformedHandshake("truncated message body")
        out.append((mtype, bytes(body)))
        pos += 4 + length
    return out


def encode_message(mtype, body):
    return bytes([mtype]) + len(body).to_bytes(3, "big") + body


def hello_random(body):
    if len(body) < 34:
        raise MalformedHandshake("short hello")
    return body[2:34]


@dataclass
class ServerHello:
    server_random: bytes
    cipher_suite: int


def parse_server_hello(body):
    if len(body) < 38:
        raise MalformedHandshake("short ServerHello")
    sid_len = body[34]
    pos = 35 + sid_len
    if len(body) < pos + 3:
        raise MalformedHandshake("short ServerHello")
    (suite,) = struct.unpack_from(">H", body, pos)
    return ServerHello(body[2:34], suite)


@dataclass
class ServerKeyExchange:
    params: bytes
    sig_scheme: int
    signature: bytes


def parse_server_key_exchange(body):
    """ECDHE named-curve params followed by a TLS 1.2 digitally-signed struct."""
    if len(body) < 4 or body[0] != 3:
        raise MalformedHandshake("only named-curve ECDHE is understood")
    pub_len = body[3]
    end = 4 + pub_len
    if len(body) < end + 4:
        raise MalformedHandshake("short ServerKeyExchange")
    scheme, sig_len = struct.unpack_from(">HH", body, end)
    sig = body[end + 4:end + 4 + sig_len]
    if len(sig) != sig_len:
        raise MalformedHandshake("truncated signature")
    return ServerKeyExchange(body[:end], scheme, sig)
