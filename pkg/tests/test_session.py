import pytest

from balboa.covert import Rewriter
from balboa.session import Connection
from balboa.tls.suites import CipherSuite
from balboa.tls import handshake as hs
from balboa.tls.record import HANDSHAKE
from balboa.harness.synth import CLIENT, SERVER, SyntheticSession, aead_open, signing_key

PSK = b"k" * 32


class Upper(Rewriter):
    """Uppercases active outgoing bytes and lowercases active incoming ones."""

    def outgoing(self, data, active):
        return data.upper() if active else data

    def incoming(self, data, active):
        return data.lower() if active else data


class Link:
    """Two connections joined by an in-memory wire; keeps both wires for inspection."""

    def __init__(self, mode="setting1", suite=CipherSuite.AES_128_GCM, seed=5,
                 client_psk=PSK, server_psk=PSK, pinned="session", client_secret=True,
                 server_secret=True, rewriter=Upper):
        self.s = SyntheticSession(seed=seed, suite=suite)
        if pinned == "session":
            pinned = self.s.server_key.public_key()
        none = lambda cr: None
        self.ends = {
            CLIENT: Connection("client", mode, client_psk,
                               self.s.secret_source if client_secret else none,
                               rewriter=rewriter(), pinned_key=pinned),
            SERVER: Connection("server", mode, server_psk,
                               self.s.secret_source if server_secret else none,
                               rewriter=rewriter()),
        }
        self.wire = {CLIENT: bytearray(), SERVER: bytearray()}
        self.sent = {CLIENT: bytearray(), SERVER: bytearray()}

    @property
    def client(self):
        return self.ends[CLIENT]

    @property
    def server(self):
        return self.ends[SERVER]

    def send(self, sender, data):
        receiver = SERVER if sender == CLIENT else CLIENT
        self.sent[sender] += data
        out = self.ends[sender].outgoing(data)
        self.wire[sender] += out
        return self.ends[receiver].incoming(out)

    def handshake(self):
        for sender, data in self.s.handshake():
            assert self.send(sender, data) == data

    def app(self, sender, text):
        rec = self.s.app_record(sender, text)
        return rec, self.send(sender, rec)


@pytest.mark.parametrize("suite", list(CipherSuite))
def test_setting1_activates_and_rewrites(suite):
    link = Link(suite=suite)
    link.handshake()
    rec, got = link.app(CLIENT, b"hello")
    assert got == rec  # signal record is forwarded unchanged apart from the tag
    assert link.client.active and link.server.active
    rec, got = link.app(SERVER, b"music")
    assert got == rec
    assert link.wire[SERVER][-len(rec):] != rec  # sealed under k' on the wire
    rec, got = link.app(CLIENT, b"more")
    assert got == rec


def test_rewriter_sees_active_plaintext():
    link = Link()
    link.handshake()
    link.app(CLIENT, b"hi")
    rec, got = link.app(SERVER, b"MiXeD")
    # Upper on the sender, lower on the receiver: the app sees lowercase
    # (Finished took sequence number 0)
    assert aead_open(link.s.suite, link.s.keys_for(SERVER), 1, got) == b"mixed"


def test_setting2_waits_for_ack():
    link = Link(mode="setting2")
    link.handshake()
    link.app(CLIENT, b"signal")
    assert link.client.signal.phase.value == "await-ack"
    assert link.server.signal.phase.value == "send-ack"
    rec, got = link.app(CLIENT, b"second")
    assert got == rec
    rec, got = link.app(SERVER, b"ack")
    assert got == rec
    assert link.client.active and link.server.active
    rec, got = link.app(SERVER, b"data")
    assert got == rec


def test_missing_key_line_is_transparent():
    link = Link(client_secret=False, server_secret=False)
    link.handshake()
    for sender, text in ((CLIENT, b"a"), (SERVER, b"b"), (CLIENT, b"c")):
        rec, got = link.app(sender, text)
        assert got == rec
    assert link.wire == link.sent
    assert link.client.passthrough and "key-log" in link.client.reason
    assert link.server.passthrough


def test_failed_pin_is_transparent():
    link = Link(pinned=signing_key(42).public_key())
    link.handshake()
    assert link.client.passthrough
    rec, got = link.app(CLIENT, b"hello")
    # the client did not mark its tag, so the server classifies it as ordinary
    assert got == rec and link.wire[CLIENT] == link.sent[CLIENT]
    assert link.server.passthrough and "non-balboa" in link.server.reason


def test_no_pinned_key_fails_closed():
    link = Link(pinned=None)
    link.handshake()
    assert link.client.passthrough


def test_psk_mismatch_yields_one_invalid_record():
    link = Link(server_psk=b"z" * 32)
    link.handshake()
    rec, got = link.app(CLIENT, b"hello")
    assert got != rec and got[:-1] == rec[:-1]
    assert got[-1] != rec[-1]
    assert link.server.passthrough and "invalid" in link.server.reason
    # from here on the server forwards verbatim
    rec, got = link.app(CLIENT, b"next")
    assert link.server.inc.passthrough


def test_missing_server_key_exchange_fails():
    link = Link()
    # a twin session yields the same server flight; strip its ServerKeyExchange
    msgs = hs.split_messages(SyntheticSession(seed=5).server_flight_messages())
    flights = link.s.handshake()
    body = b"".join(hs.encode_message(t, b) for t, b in msgs if t != hs.SERVER_KEY_EXCHANGE)
    flights[1] = (SERVER, link.s.plain_record(HANDSHAKE, body))
    for sender, data in flights:
        link.send(sender, data)
    rec, got = link.app(CLIENT, b"hello")
    assert link.client.passthrough and "ServerKeyExchange" in link.client.reason


def test_unsupported_suite_fails():
    link = Link()
    hello = hs.encode_message(hs.SERVER_HELLO, b"\x03\x03" + bytes(32) + b"\x00\x00\x2f\x00")
    link.client.observe_handshake(link.client.inc, hello)
    assert link.client.passthrough and "unsupported" in link.client.reason


def test_alert_ends_only_its_direction():
    link = Link()
    link.handshake()
    link.app(CLIENT, b"hi")
    alert = link.s.alert(CLIENT)
    assert link.send(CLIENT, alert) == alert
    assert link.client.out.ended == "alert" and link.server.inc.ended == "alert"
    # the server keeps streaming under k' and the client still recovers it
    for text in (b"one", b"two"):
        rec, got = link.app(SERVER, text)
        assert got == rec
    assert link.client.active and link.server.active
    assert link.client.stats()["ended"] == {"out": "alert"}


def test_stats_fields():
    link = Link()
    link.handshake()
    link.app(CLIENT, b"x")
    st = link.server.stats()
    assert st["phase"] == "active" and st["reason"] is None
    assert st["records_in"] == 5  # ClientHello, CKE, CCS, Finished, data
    assert st["records_out"] == 3


def test_prepare_commit_matches_outgoing():
    a, b = Link(), Link()
    for link in (a, b):
        link.handshake()
        link.app(CLIENT, b"sig")
    rec = a.s.app_record(SERVER, b"payload" * 100)
    b.s.app_record(SERVER, b"payload" * 100)
    whole = a.server.outgoing(rec)
    pieces = bytearray()
    pos = 0
    for n in (3, 50, 1, 400):
        out = b.server.prepare_write(rec[pos:])
        b.server.commit_write(n)
        pieces += out[:n]
        pos += n
    pieces += b.server.prepare_write(rec[pos:])
    b.server.commit_write(len(rec) - pos)
    assert bytes(pieces) == whole
