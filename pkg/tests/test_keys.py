import hashlib
import random

import pytest
from tlslite import constants as tc
from tlslite.mathtls import PRF_1_2, calc_key

from balboa.tls.keys import (BadHexDigit, BadHexLength, BadLabel, SessionSecrets,
                             derive_covert_keys, derive_direction_keys, format_keylog_line,
                             key_block, parse_keylog_line, prf)
from balboa.tls.suites import CipherSuite
from oracles import blake3_ref

TLSLITE_SUITE = {
    CipherSuite.AES_128_GCM: tc.CipherSuite.TLS_ECDHE_ECDSA_WITH_AES_128_GCM_SHA256,
    CipherSuite.AES_256_GCM: tc.CipherSuite.TLS_ECDHE_ECDSA_WITH_AES_256_GCM_SHA384,
    CipherSuite.CHACHA20_POLY1305: tc.CipherSuite.TLS_ECDHE_ECDSA_WITH_CHACHA20_POLY1305_SHA256,
}


def secrets_for(suite, seed=1):
    rng = random.Random(seed)
    return SessionSecrets(rng.randbytes(48), rng.randbytes(32), rng.randbytes(32), suite)


def test_keylog_line_parses():
    cr, mk = parse_keylog_line("CLIENT_RANDOM " + "ab" * 32 + " " + "cd" * 48)
    assert cr == b"\xab" * 32
    assert mk == b"\xcd" * 48


def test_keylog_line_tolerates_newline_and_case():
    cr, mk = parse_keylog_line(b"CLIENT_RANDOM " + b"AB" * 32 + b" " + b"cD" * 48 + b"\r\n")
    assert cr == b"\xab" * 32 and mk == b"\xcd" * 48


@pytest.mark.parametrize("line, exc", [
    ("SERVER_RANDOM " + "ab" * 32 + " " + "cd" * 48, BadLabel),
    ("CLIENT_TRAFFIC_SECRET_0 " + "ab" * 32 + " " + "cd" * 32, BadLabel),
    ("CLIENT_RANDOM " + "ab" * 31 + " " + "cd" * 48, BadHexLength),
    ("CLIENT_RANDOM " + "ab" * 32 + " " + "cd" * 47, BadHexLength),
    ("CLIENT_RANDOM " + "ab" * 32, BadHexLength),
    ("CLIENT_RANDOM " + "zz" * 32 + " " + "cd" * 48, BadHexDigit),
])
def test_keylog_line_errors(line, exc):
    with pytest.raises(exc):
        parse_keylog_line(line)


def test_keylog_format_round_trip():
    cr, mk = bytes(range(32)), bytes(range(48))
    assert parse_keylog_line(format_keylog_line(cr, mk)) == (cr, mk)


def test_prf_matches_tlslite():
    rng = random.Random(3)
    for _ in range(5):
        secret, seed = rng.randbytes(48), rng.randbytes(64)
        n = rng.randint(1, 200)
        assert prf(secret, b"key expansion", seed, n, hashlib.sha256) == \
            bytes(PRF_1_2(bytearray(secret), b"key expansion", bytearray(seed), n))


@pytest.mark.parametrize("suite", list(CipherSuite))
def test_key_block_matches_tlslite(suite):
    s = secrets_for(suite)
    length = 2 * (suite.key_len + suite.iv_len)
    ref = calc_key((3, 3), bytearray(s.master_secret), TLSLITE_SUITE[suite], b"key expansion",
                   client_random=bytearray(s.client_random),
                   server_random=bytearray(s.server_random), output_length=length)
    assert key_block(s) == bytes(ref)


@pytest.mark.parametrize("suite", list(CipherSuite))
def test_direction_keys_partition(suite):
    s = secrets_for(suite)
    block = key_block(s)
    c, sv = derive_direction_keys(s)
    k, v = suite.key_len, suite.iv_len
    assert c.aead_key + sv.aead_key + c.implicit_iv + sv.implicit_iv == block
    assert (len(c.aead_key), len(c.implicit_iv)) == (k, v)
    assert derive_direction_keys(s) == (c, sv)


def test_aes256_keys_longer_than_aes128():
    a = derive_direction_keys(secrets_for(CipherSuite.AES_128_GCM))[0]
    b = derive_direction_keys(secrets_for(CipherSuite.AES_256_GCM))[0]
    assert (len(a.aead_key), len(b.aead_key)) == (16, 32)


def test_secrets_lengths_checked():
    with pytest.raises(ValueError):
        SessionSecrets(bytes(47), bytes(32), bytes(32), CipherSuite.AES_128_GCM)
    with pytest.raises(ValueError):
        SessionSecrets(bytes(48), bytes(31), bytes(32), CipherSuite.AES_128_GCM)


def test_covert_keys_match_reference_blake3():
    rng = random.Random(5)
    mk, psk = rng.randbytes(48), rng.randbytes(32)
    keys = derive_covert_keys(mk, psk)
    assert keys.k_prime == blake3_ref.derive_key("balboa-reenc", mk + psk, 32)
    assert keys.k_client == blake3_ref.derive_key("balboa-client", mk + psk, 16)
    assert keys.k_server == blake3_ref.derive_key("balboa-server", mk + psk, 16)
    assert keys.reenc_key(CipherSuite.AES_128_GCM) == keys.k_prime[:16]
    assert keys.reenc_key(CipherSuite.CHACHA20_POLY1305) == keys.k_prime


def test_reference_blake3_published_vector():
    # derive_key mode, empty input, from the reference test-vector file
    ctx = "BLAKE3 2019-12-27 16:29:52 test vectors context"
    assert blake3_ref.derive_key(ctx, b"").hex() == \
        "2cc39783c223154fea8dfb7c1b1660f2ac2dcbd1c1de8277b0b0dd39b7e50d7d"


def test_covert_keys_depend_on_psk():
    mk = bytes(48)
    a = derive_covert_keys(mk, b"k" * 16)
    b = derive_covert_keys(mk, b"j" * 16)
    assert a.k_prime != b.k_prime and a.k_client != b.k_client and a.k_server != b.k_server
    assert derive_covert_keys(mk, b"k" * 16) == a
    assert len({a.k_client, a.k_server, a.k_prime[:16]}) == 3


def test_covert_keys_need_psk():
    with pytest.raises(ValueError):
        derive_covert_keys(bytes(48), b"")
