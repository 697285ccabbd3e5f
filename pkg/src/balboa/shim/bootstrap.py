"""Entry points the preload library calls into.

Loaded lazily by the native layer the first time an Internet socket connects
or is accepted.  A bad or missing configuration disables interception for the
whole process; the hooks then leave every descriptor alone.
"""

from __future__ import annotations

import logging
import os
import threading

from ..covert import CovertQueue
from .config import ConfigError, load_config
from .interpose import Interposer
from .keylog import ENV_KEYLOG, ENV_KEYLOG_FD, KeylogReader, SecretStore, is_fifo

log = logging.getLogger("balboa.shim")

_lock = threading.Lock()
_state = {"interposer": None, "disabled": False}


def _load_model(path):
    from ..model import load_web_model, read_audio_model
    if not path:
        return None
    if os.path.isdir(path):
        return load_web_model(path)
    return read_audio_model(path)


def _build():
    config = load_config()
    secrets = SecretStore()
    keylog_path = os.environ.get(ENV_KEYLOG)
    keylog_fd = os.environ.get(ENV_KEYLOG_FD)
    if keylog_fd is not None or (keylog_path and is_fifo(keylog_path)):
        KeylogReader(secrets, path=keylog_path,
                     fd=int(keylog_fd) if keylog_fd else None).start()
    else:
        log.warning("no key-log FIFO; every connection will pass through")
    pinned = None
    if config.pinned_key_path:
        from ..signaling import load_pinned_key
        pinned = load_pinned_key(config.pinned_key_path)
    queue = CovertQueue()
    if config.covert_socket_path:
        from .covert_socket import CovertSocketServer
        CovertSocketServer(config.covert_socket_path, queue).start()
    return Interposer(config, secrets, queue, pinned, _load_model(config.model_path))


def interposer():
    if _state["interposer"] is not None or _state["disabled"]:
        return _state["interposer"]
    with _lock:
        if _state["interposer"] is None and not _state["disabled"]:
            try:
                _state["interposer"] = _build()
            except (ConfigError, OSError, ValueError) as exc:
                log.error("interception disabled: %s", exc)
                _state["disabled"] = True
    return _state["interposer"]


# native callbacks; every one of them must swallow its own errors


def on_connect(fd, address, port):
    try:
        ip = interposer()
        return bool(ip and ip.on_connect(fd, address, port))
    except Exception:
        log.exception("on_connect")
        return False


def on_accept(fd, address, port):
    try:
        ip = interposer()
        return bool(ip and ip.on_accept(fd, address, port))
    except Exception:
        log.exception("on_accept")
        return False


def on_close(fd):
    try:
        ip = _state["interposer"]
        if ip is not None:
            ip.on_close(fd)
    except Exception:
        log.exception("on_close")


def on_write(fd, data):
    try:
        return _state["interposer"].on_write(fd, data)
    except Exception:
        log.exception("on_write")
        return data


def on_write_done(fd, n):
    try:
        _state["interposer"].on_write_done(fd, n)
    except Exception:
        log.exception("on_write_done")


def on_read(fd, data):
    try:
        return _state["interposer"].on_read(fd, data)
    except Exception:
        log.exception("on_read")
        return data
