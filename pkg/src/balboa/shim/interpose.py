"""Descriptor tracking and the data-path hooks behind the preload library.

The native side calls :class:`Interposer` methods with raw buffers; the
``write``/``read`` helpers here take the real system-call as a callable, which
keeps the semantics testable without a preload.  Any exception inside the
pipeline puts that descriptor's session into passthrough and the original
bytes are used, so the host application never sees an internal error.
"""

from __future__ import annotations

import contextlib
import logging
import threading

from ..covert import CovertQueue, IdentityRewriter
from ..session import Connection

log = logging.getLogger(__name__)

SECRET_WAIT = 0.25

_guard = threading.local()


@contextlib.contextmanager
def recursion_guard():
    """Yields True when the caller is the outermost hook on this thread."""
    outer = not getattr(_guard, "active", False)
    if outer:
        _guard.active = True
    try:
        yield outer
    finally:
        if outer:
            _guard.active = False


def in_hook():
    return getattr(_guard, "active", False)


class FdSession:
    def __init__(self, fd, connection: Connection, peer=None):
        self.fd = fd
        self.connection = connection
        self.peer = peer
        self.lock = connection.lock

    def outgoing(self, data):
        with self.lock:
            try:
                return self.connection.prepare_write(data)
            except Exception as exc:  # contained
                self._contain(exc)
                return bytes(data)

    def written(self, n):
        with self.lock:
            try:
                self.connection.commit_write(n)
            except Exception as exc:
                self._contain(exc)

    def incoming(self, data):
        with self.lock:
            try:
                return self.connection.incoming(data)
            except Exception as exc:
                self._contain(exc)
                return bytes(data)

    def _contain(self, exc):
        log.exception("fd %d: internal failure, passthrough", self.fd)
        self.connection.fail(f"internal: {exc!r}")


class SessionTable:
    """fd -> session.  Reads take no lock (dict lookups are atomic under the GIL)."""

    def __init__(self):
        self._sessions = {}
        self._lock = threading.Lock()

    def get(self, fd):
        return self._sessions.get(fd)

    def add(self, fd, session):
        with self._lock:
            if fd in self._sessions:
                raise KeyError(f"fd {fd} already tracked")
            self._sessions[fd] = session

    def remove(self, fd):
        with self._lock:
            return self._sessions.pop(fd, None)

    def __len__(self):
        return len(self._sessions)

    def __contains__(self, fd):
        return fd in self._sessions


class Interposer:
    """Per-process hook state: configuration, secrets, the covert queue, sessions."""

    def __init__(self, config, secrets, queue=None, pinned_key=None, model=None):
        self.config = config
        self.secrets = secrets
        self.queue = queue if queue is not None else CovertQueue()
        self.pinned_key = pinned_key
        self.model = model
        self.sessions = SessionTable()

    def _secret(self, client_random):
        return self.secrets.lookup(client_random, timeout=SECRET_WAIT)

    def _rewriter(self):
        from ..model import AudioModel, WebAssetModel
        from ..rewriters.http import HttpRewriter
        from ..rewriters.ogg import OggRewriter
        if isinstance(self.model, AudioModel):
            return OggRewriter(self.model, self.queue)
        if isinstance(self.model, WebAssetModel):
            return HttpRewriter(self.model, self.queue, self.config.role)
        return IdentityRewriter()

    def _track(self, fd, peer):
        conn = Connection(self.config.role, self.config.mode, self.config.psk, self._secret,
                          rewriter=self._rewriter(), pinned_key=self.pinned_key)
        self.sessions.remove(fd)
        self.sessions.add(fd, FdSession(fd, conn, peer))
        return True

    # callbacks from the native layer

    def on_connect(self, fd, address, port):
        if self.config.role != "client" or not self.config.matches(address, port):
            return False
        return self._track(fd, (address, port))

    def on_accept(self, fd, local_address, local_port, peer=None):
        if self.config.role != "server" or not self.config.matches(local_address, local_port):
            return False
        return self._track(fd, peer)

    def on_close(self, fd):
        session = self.sessions.remove(fd)
        if session is not None:
            log.info("fd %d closed: %s", fd, session.connection.stats())

    def on_write(self, fd, data):
        session = self.sessions.get(fd)
        return bytes(data) if session is None else session.outgoing(data)

    def on_write_done(self, fd, n):
        session = self.sessions.get(fd)
        if session is not None and n > 0:
            session.written(n)

    def on_read(self, fd, data):
        session = self.sessions.get(fd)
        return bytes(data) if session is None else session.incoming(data)

    # call-level wrappers: ``real`` performs the actual system call

    def write(self, fd, data, real):
        """Hooked write: returns exactly what ``real`` returns; its errors propagate."""
        with recursion_guard() as outer:
            if not outer or fd not in self.sessions:
                return real(fd, data)
            out = self.on_write(fd, data)
            n = real(fd, out)
            self.on_write_done(fd, n)
            return n

    def read(self, fd, size, real):
        with recursion_guard() as outer:
            if not outer or fd not in self.sessions:
                return real(fd, size)
            data = real(fd, size)
            return self.on_read(fd, data) if data else data

    def writev(self, fd, buffers, real):
        """Vectored write: segments are processed as their concatenation."""
        with recursion_guard() as outer:
            if not outer or fd not in self.sessions:
                return real(fd, buffers)
            joined = b"".join(bytes(b) for b in buffers)
            out = self.on_write(fd, joined)
            pieces, pos = [], 0
            for b in buffers:
                pieces.append(out[pos:pos + len(b)])
                pos += len(b)
            n = real(fd, pieces)
            self.on_write_done(fd, n)
            return n

    def close(self, fd, real):
        with recursion_guard() as outer:
            if outer:
                self.on_close(fd)
            return real(fd)

