"""Interception configuration: a flat ``key=value`` file named by ``BALBOA_CONFIG``."""

from __future__ import annotations

import ipaddress
import os
from dataclasses import dataclass, field

ENV_CONFIG = "BALBOA_CONFIG"
KEYS = ("role", "mode", "port", "address", "psk_hex", "pinned_key_path", "model_path",
        "covert_socket_path")
MIN_PSK = 16


class ConfigError(ValueError):
    pass


def _split(value):
    return [v.strip() for v in value.replace(",", " ").split() if v.strip()]


@dataclass
class InterceptConfig:
    role: str
    mode: str = "setting1"
    ports: tuple = ()
    addresses: tuple = ()
    psk: bytes = b""
    pinned_key_path: str | None = None
    model_path: str | None = None
    covert_socket_path: str | None = None
    extra: dict = field(default_factory=dict)

    def matches(self, address, port):
        """True when every configured rule accepts the service endpoint.

        The service endpoint is the remote end for a client and the local
        (listening) end for a server.
        """
        if self.ports and port not in self.ports:
            return False
        if self.addresses:
            try:
                ip = ipaddress.ip_address(address)
            except ValueError:
                return False
            if not any(ip in net for net in self.addresses):
                return False
        return True


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    role = values.pop("role", None)
    if role not in ("client", "server"):
        raise ConfigError("role must be 'client' or 'server'")
    mode = values.pop("mode", "setting1")
    if mode not in ("setting1", "setting2"):
        raise ConfigError("mode must be 'setting1' or 'setting2'")
    try:
        ports = tuple(int(p) for p in _split(values.pop("port", "")))
    except ValueError as exc:
        raise ConfigError(f"bad port list: {exc}") from None
    if any(not 0 < p < 65536 for p in ports):
        raise ConfigError("ports must be in 1..65535")
    try:
        addresses = tuple(ipaddress.ip_network(a, strict=False)
                          for a in _split(values.pop("address", "")))
    except ValueError as exc:
        raise ConfigError(f"bad address: {exc}") from None
    psk_hex = values.pop("psk_hex", "")
    try:
        psk = bytes.fromhex(psk_hex)
    except ValueError:
        raise ConfigError("psk_hex is not hex") from None
    if len(psk) < MIN_PSK:
        raise ConfigError(f"psk_hex must encode at least {MIN_PSK} bytes")
    pinned = values.pop("pinned_key_path", None)
    if role == "client" and not pinned:
        raise ConfigError("a client needs pinned_key_path")
    unknown = set(values) - set(KEYS)
    return InterceptConfig(role, mode, ports, addresses, psk, pinned,
                           values.pop("model_path", None),
                           values.pop("covert_socket_path", None),
                           {k: values[k] for k in unknown})


def load_config(path=None):
    path = path or os.environ.get(ENV_CONFIG)
    if not path:
        raise ConfigError(f"{ENV_CONFIG} is not set")
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
