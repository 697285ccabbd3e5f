"""Fake system calls and interposer pairs shared by the shim-level tests."""

import errno

from balboa.covert import CovertQueue
from balboa.shim.config import parse_config
from balboa.shim.interpose import Interposer
from balboa.shim.keylog import SecretStore
from balboa.signaling import load_pinned_key
from balboa.harness.synth import CLIENT, SERVER, SyntheticSession, public_pem

PSK_HEX = "ab" * 16
CLIENT_CONF = f"role=client\nport=443\npsk_hex={PSK_HEX}\npinned_key_path=/x.pem\n"
SERVER_CONF = f"role=server\nport=443\npsk_hex={PSK_HEX}\n"


class Kernel:
    """A socket pair's worth of byte queues; writes accept a scheduled amount."""

    def __init__(self, accept=()):
        self.wire = bytearray()
        self.accept = list(accept)
        self.calls = 0

    def write(self, fd, data):
        self.calls += 1
        n = self.accept.pop(0) if self.accept else len(data)
        if n < 0:
            raise BlockingIOError(errno.EAGAIN, "would block")
        n = min(n, len(data))
        self.wire += bytes(data[:n])
        return n

    def writev(self, fd, buffers):
        return self.write(fd, b"".join(bytes(b) for b in buffers))

    def read_from(self, source, limit):
        def read(fd, size):
            chunk = bytes(source[:min(size, limit)])
            del source[:len(chunk)]
            return chunk
        return read


def interposers(tmp_path, seed=3, session=None, secrets=True):
    s = session or SyntheticSession(seed=seed)
    pem = tmp_path / "pin.pem"
    pem.write_bytes(public_pem(s.server_key))
    ends = {}
    for role, text in ((CLIENT, CLIENT_CONF), (SERVER, SERVER_CONF)):
        store = SecretStore()
        if secrets:
            store.publish(s.client_random, s.master_secret)
        ends[role] = Interposer(parse_config(text), store, CovertQueue(),
                                pinned_key=load_pinned_key(str(pem)))
    return s, ends


def deliver(ip, fd, data, kernel, vectored=False):
    """Write ``data`` through ``ip`` with EAGAIN/partial acceptances; return the wire."""
    pos = 0
    while pos < len(data):
        try:
            if vectored:
                rest = data[pos:]
                n = ip.writev(fd, [rest[:3], rest[3:10], rest[10:]], kernel.writev)
            else:
                n = ip.write(fd, data[pos:], kernel.write)
        except BlockingIOError:
            continue
        pos += n
    return kernel.wire


def receive_all(ip, fd, wire, limit):
    src = bytearray(wire)
    read = Kernel().read_from(src, limit)
    out = bytearray()
    while src:
        out += ip.read(fd, 1 << 16, read)
    return bytes(out)
