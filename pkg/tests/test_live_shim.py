"""Real OpenSSL endpoints in two processes, each under the preload library."""

import datetime
import os
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest
from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.x509.oid import NameOID

from balboa.harness import corpus
from balboa.harness.synth import public_pem, signing_key
from balboa.shim import covert_socket, native

pytestmark = [pytest.mark.live, pytest.mark.slow]

PEER = str(Path(__file__).with_name("live") / "peer.py")
SECRET = random.Random(9).randbytes(50_000)
_port = [40000 + os.getpid() % 20000]


def wait_for(path, timeout=20.0):
    end = time.monotonic() + timeout
    while not os.path.exists(path):
        if time.monotonic() > end:
            raise TimeoutError(path)
        time.sleep(0.02)


@pytest.fixture(scope="module")
def material(tmp_path_factory):
    d = tmp_path_factory.mktemp("live")
    key = signing_key(7)
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "radio.example")])
    start = datetime.datetime(2024, 1, 1)
    cert = (x509.CertificateBuilder().subject_name(name).issuer_name(name)
            .public_key(key.public_key()).serial_number(1).not_valid_before(start)
            .not_valid_after(start + datetime.timedelta(days=3650)).sign(key, hashes.SHA256()))
    (d / "cert.pem").write_bytes(cert.public_bytes(serialization.Encoding.PEM))
    (d / "key.pem").write_bytes(key.private_bytes(serialization.Encoding.PEM,
                                                  serialization.PrivateFormat.PKCS8,
                                                  serialization.NoEncryption()))
    (d / "pin.pem").write_bytes(public_pem(key))
    (d / "other.pem").write_bytes(public_pem(signing_key(8)))
    file_bytes, model = corpus._audio_model(1, 300_000, (2500, 5000))
    (d / "model.ogg").write_bytes(file_bytes)
    stream = corpus._paginate(model, 1000, 250_000, 0x1234, random.Random(3), (3000, 6000))
    (d / "stream.ogg").write_bytes(stream)
    return d, stream


def session(material, tmp_path, mode="setting1", ciphers=None, pin="pin.pem", via_cli=False):
    d, stream = material
    _port[0] += 1
    port = _port[0]
    common = f"mode={mode}\nport={port}\npsk_hex={'ab' * 16}\nmodel_path={d / 'model.ogg'}\n"
    sconf, cconf = tmp_path / "server.conf", tmp_path / "client.conf"
    sconf.write_text(f"role=server\n{common}covert_socket_path={tmp_path / 's.sock'}\n")
    cconf.write_text(f"role=client\n{common}covert_socket_path={tmp_path / 'c.sock'}\n"
                     f"pinned_key_path={d / pin}\n")
    env = dict(os.environ, PEER_CIPHERS=ciphers or "")
    server_argv = [sys.executable, PEER, "server", str(port), str(d / "cert.pem"),
                   str(d / "key.pem"), str(d / "stream.ogg"), str(tmp_path / "ready"),
                   str(tmp_path / "go")]
    if via_cli:
        srv = subprocess.Popen([sys.executable, "-m", "balboa.cli", "run", "--role", "server",
                                "--config", str(sconf), "--", *server_argv], env=env)
    else:
        srv = subprocess.Popen(server_argv, env=native.launch_env(str(sconf), base=env))
    try:
        wait_for(tmp_path / "ready")
        cli = subprocess.Popen([sys.executable, PEER, "client", str(port),
                                str(tmp_path / "out.ogg"), "--hold"],
                               env=native.launch_env(str(cconf), base=env), stdin=subprocess.PIPE)
        try:
            wait_for(tmp_path / "s.sock")
            assert covert_socket.send(str(tmp_path / "s.sock"), SECRET)
            (tmp_path / "go").touch()
            wait_for(tmp_path / "out.ogg", timeout=60)
            wait_for(tmp_path / "c.sock")
            got = covert_socket.receive(str(tmp_path / "c.sock"), limit=len(SECRET), timeout=3)
        finally:
            cli.stdin.close()
            crc = cli.wait(30)
        src = srv.wait(30)
    finally:
        if srv.poll() is None:
            srv.kill()
    return crc, src, (tmp_path / "out.ogg").read_bytes(), got


@pytest.mark.parametrize("mode,ciphers", [
    ("setting1", "ECDHE-ECDSA-AES128-GCM-SHA256"),
    ("setting1", "ECDHE-ECDSA-CHACHA20-POLY1305"),
    ("setting2", "ECDHE-ECDSA-AES256-GCM-SHA384"),
])
def test_live_covert_transfer(have_cc, material, tmp_path, mode, ciphers):
    crc, src, out, got = session(material, tmp_path, mode, ciphers)
    assert (crc, src) == (0, 0)
    assert out == material[1]
    assert got == SECRET


def test_live_wrong_pin_is_transparent(have_cc, material, tmp_path):
    crc, src, out, got = session(material, tmp_path, pin="other.pem")
    assert (crc, src) == (0, 0)
    assert out == material[1]
    assert got == b""


def test_live_server_under_cli(have_cc, material, tmp_path):
    crc, src, out, got = session(material, tmp_path, via_cli=True)
    assert (crc, src) == (0, 0)
    assert out == material[1] and got == SECRET
