"""Master secrets from the key-log interface.

The launcher creates a FIFO and exports it as ``SSLKEYLOGFILE``; a reader
thread parses each line and publishes the secret under its client_random.
Sessions look their secret up when the first Application Data record
arrives; by then every mainstream TLS library has logged it.
"""

from __future__ import annotations

import logging
import os
import stat
import tempfile
import threading

from ..tls.keys import KeylogError, parse_keylog_line

log = logging.getLogger(__name__)

ENV_KEYLOG = "SSLKEYLOGFILE"
ENV_KEYLOG_FD = "BALBOA_KEYLOG_FD"


class SecretStore:
    def __init__(self):
        self._secrets = {}
        self._cond = threading.Condition()
        self.lines = 0
        self.rejected = 0

    def publish(self, client_random, master_secret):
        with self._cond:
            self._secrets[bytes(client_random)] = bytes(master_secret)
            self._cond.notify_all()

    def feed_line(self, line):
        line = line.strip()
        if not line or line.startswith(b"#"):
            return
        self.lines += 1
        try:
            cr, mk = parse_keylog_line(line)
        except KeylogError as exc:
            # other labels (CLIENT_TRAFFIC_SECRET_0 etc.) land here too
            self.rejected += 1
            log.debug("key-log line ignored: %s", exc)
            return
        self.publish(cr, mk)

    def lookup(self, client_random, timeout=0.0):
        """The master secret for ``client_random``, waiting up to ``timeout`` seconds."""
        key = bytes(client_random)
        with self._cond:
            if key not in self._secrets and timeout:
                self._cond.wait_for(lambda: key in self._secrets, timeout)
            return self._secrets.get(key)

    __call__ = lookup


def make_fifo(directory=None):
    """Create a fresh FIFO; returns its path."""
    directory = directory or tempfile.mkdtemp(prefix="balboa-")
    path = os.path.join(directory, "keylog.fifo")
    os.mkfifo(path, 0o600)
    return path


def is_fifo(path):
    try:
        return stat.S_ISFIFO(os.stat(path).st_mode)
    except OSError:
        return False


class KeylogReader(threading.Thread):
    """Reads key-log lines from a FIFO (or an already-open read descriptor)."""

    def __init__(self, store: SecretStore, path=None, fd=None):
        super().__init__(name="balboa-keylog", daemon=True)
        self.store = store
        self.path = path
        self.fd = fd
        self._keepalive = None

    def run(self):
        fd = self.fd
        try:
            if fd is None:
                fd = os.open(self.path, os.O_RDONLY | os.O_NONBLOCK)
            os.set_blocking(fd, True)
            if self.path:
                # holding a writer open keeps reads blocking instead of hitting EOF
                self._keepalive = os.open(self.path, os.O_WRONLY | os.O_NONBLOCK)
        except OSError as exc:
            log.warning("key-log reader disabled: %s", exc)
            return
        pending = b""
        while True:
            try:
                chunk = os.read(fd, 65536)
            except OSError as exc:
                log.warning("key-log read failed: %s", exc)
                return
            if not chunk:
                return
            pending += chunk
            *lines, pending = pending.split(b"\n")
            for line in lines:
                self.store.feed_line(line)
