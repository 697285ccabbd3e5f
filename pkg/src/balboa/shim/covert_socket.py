"""Local endpoint for feeding and draining the process's covert queue.

A client connects to the unix socket and sends one command line: ``SEND``
followed by the bytes to embed (until it closes its write side), or ``RECV``
to receive delivered bytes as they arrive.
"""

from __future__ import annotations

import logging
import os
import socket
import threading

from ..covert import CovertQueue

log = logging.getLogger(__name__)

SEND = b"SEND\n"
RECV = b"RECV\n"


class CovertSocketServer(threading.Thread):
    def __init__(self, path, queue: CovertQueue):
        super().__init__(name="balboa-covert", daemon=True)
        self.path = path
        self.queue = queue
        self._closed = threading.Event()
        if os.path.exists(path):
            os.unlink(path)
        self.sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self.sock.bind(path)
        os.chmod(path, 0o600)
        self.sock.listen(8)

    def run(self):
        while not self._closed.is_set():
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn):
        with conn:
            command = b""
            while not command.endswith(b"\n") and len(command) < 16:
                b = conn.recv(1)
                if not b:
                    return
                command += b
            if command == SEND:
                while True:
                    data = conn.recv(65536)
                    if not data:
                        break
                    self.queue.push(data)
                conn.sendall(b"OK\n")
            elif command == RECV:
                while not self._closed.is_set():
                    data = self.queue.drain(timeout=0.2)
                    if data:
                        try:
                            conn.sendall(data)
                        except OSError:
                            return
            else:
                conn.sendall(b"ERR unknown command\n")

    def close(self):
        self._closed.set()
        try:
            self.sock.close()
        finally:
            if os.path.exists(self.path):
                os.unlink(self.path)


def send(path, data):
    with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as s:
        s.connect(path)
        s.sendall(SEND + data)
        s.shutdown(socket.SHUT_WR)
        return s.recv(16) == b"OK\n"


def receive(path, limit=None, timeout=None):
    """Read delivered covert bytes until ``limit`` bytes arrive or the timeout passes."""
    out = bytearray()
    with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as s:
        s.settimeout(timeout)
        s.connect(path)
        s.sendall(RECV)
        while limit is None or len(out) < limit:
            try:
                data = s.recv(65536)
            except socket.timeout:
                break
            if not data:
                break
            out += data
    return bytes(out)
