"""Covert mutual authentication by masking AEAD tags.

The client marks the tag of its first Application Data record with ``k_C``;
the server tells that apart from an honest tag and, in the second setting,
acknowledges with ``k_S`` on one of its own records.  Every failure ends in
passthrough.
"""

from __future__ import annotations

import enum
import hmac
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa

from .tls import handshake as hs
from .tls.keys import CovertKeys

ECDSA_SECP256R1_SHA256 = 0x0403
RSA_PKCS1_SHA256 = 0x0401
RSA_PSS_RSAE_SHA256 = 0x0804


def mark_tag(tag, key):
    if len(tag) != len(key):
        raise ValueError("tag and key lengths differ")
    return bytes(a ^ b for a, b in zip(tag, key))


server_ack_tag = mark_tag


class Classification(enum.Enum):
    NON_BALBOA = "non-balboa"
    BALBOA = "balboa"
    INVALID = "invalid"


def classify_first_record(received_tag, expected_tag, k_client):
    if hmac.compare_digest(received_tag, expected_tag):
        return Classification.NON_BALBOA
    if hmac.compare_digest(received_tag, mark_tag(expected_tag, k_client)):
        return Classification.BALBOA
    return Classification.INVALID


def client_detect_ack(received_tag, expected_tag, k_server):
    return hmac.compare_digest(received_tag, mark_tag(expected_tag, k_server))


def load_pinned_key(path_or_pem):
    data = path_or_pem
    if isinstance(path_or_pem, str) and not path_or_pem.lstrip().startswith("-----"):
        with open(path_or_pem, "rb") as fh:
            data = fh.read()
    if isinstance(data, str):
        data = data.encode()
    return serialization.load_pem_public_key(data)


def verify_server_key_exchange(transcript, pinned_key):
    """Check the ServerKeyExchange signature in ``transcript`` against ``pinned_key``.

    ``transcript`` is the concatenation of handshake messages in wire order.
    Malformed transcripts and unsupported schemes count as failures.
    """
    try:
        messages = hs.split_messages(transcript)
        by_type = {}
        for mtype, body in messages:
            by_type.setdefault(mtype, body)
        client_random = hs.hello_random(by_type[hs.CLIENT_HELLO])
        server_random = hs.parse_server_hello(by_type[hs.SERVER_HELLO]).server_random
        ske = hs.parse_server_key_exchange(by_type[hs.SERVER_KEY_EXCHANGE])
    except (KeyError, hs.MalformedHandshake):
        return False
    signed = client_random + server_random + ske.params
    try:
        if ske.sig_scheme == ECDSA_SECP256R1_SHA256 and isinstance(pinned_key, ec.EllipticCurvePublicKey):
            pinned_key.verify(ske.signature, signed, ec.ECDSA(hashes.SHA256()))
        elif ske.sig_scheme == RSA_PKCS1_SHA256 and isinstance(pinned_key, rsa.RSAPublicKey):
            pinned_key.verify(ske.signature, signed, padding.PKCS1v15(), hashes.SHA256())
        elif ske.sig_scheme == RSA_PSS_RSAE_SHA256 and isinstance(pinned_key, rsa.RSAPublicKey):
            pinned_key.verify(ske.signature, signed,
                              padding.PSS(padding.MGF1(hashes.SHA256()), 32), hashes.SHA256())
        else:
            return False
    except (InvalidSignature, ValueError):
        return False
    return True


class Role(enum.Enum):
    CLIENT = "client"
    SERVER = "server"


class Mode(enum.Enum):
    SETTING1 = "setting1"
    SETTING2 = "setting2"


class Phase(enum.Enum):
    VERIFY_SERVER_KEY = "verify-server-key"
    SEND_SIGNAL = "send-signal"
    AWAIT_ACK = "await-ack"
    AWAIT_SIGNAL = "await-signal"
    SEND_ACK = "send-ack"
    ACTIVE = "active"
    PASSTHROUGH = "passthrough"


@dataclass
class SignalingState:
    """Per-connection signaling progress.

    Direction activity is tracked separately because in the second setting a
    client may rewrite outgoing records while still waiting for the server's
    acknowledgement on incoming ones.
    """

    role: Role
    mode: Mode
    covert_keys: CovertKeys | None = None
    pinned_key: object = None
    phase: Phase = field(default=None)
    out_active: bool = False
    in_active: bool = False

    def __post_init__(self):
        if self.phase is None:
            self.phase = (Phase.VERIFY_SERVER_KEY if self.role is Role.CLIENT
                          else Phase.AWAIT_SIGNAL)

    @property
    def passthrough(self):
        return self.phase is Phase.PASSTHROUGH

    def fail(self):
        self.phase = Phase.PASSTHROUGH
        self.out_active = self.in_active = False

    # client side

    def server_key_checked(self, ok):
        if self.phase is not Phase.VERIFY_SERVER_KEY:
            return
        if ok:
            self.phase = Phase.SEND_SIGNAL
        else:
            self.fail()

    def signal_sent(self):
        if self.phase is not Phase.SEND_SIGNAL:
            return
        self.out_active = True
        if self.mode is Mode.SETTING1:
            self.in_active = True
            self.phase = Phase.ACTIVE
        else:
            self.phase = Phase.AWAIT_ACK

    def ack_seen(self):
        if self.phase is Phase.AWAIT_ACK:
            self.in_active = True
            self.phase = Phase.ACTIVE

    # server side

    def first_record_classified(self, result):
        if self.phase is not Phase.AWAIT_SIGNAL:
            return
        if result is not Classification.BALBOA:
            self.fail()
            return
        self.in_active = True
        if self.mode is Mode.SETTING1:
            self.out_active = True
            self.phase = Phase.ACTIVE
        else:
            self.phase = Phase.SEND_ACK

    def ack_sent(self):
        if self.phase is Phase.SEND_ACK:
            self.out_active = True
            self.phase = Phase.ACTIVE
