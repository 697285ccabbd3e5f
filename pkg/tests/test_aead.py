import random

import pytest
from hypothesis import given, settings, strategies as st

from balboa.tls.aead import AeadStream, record_aad, record_nonce
from balboa.tls.suites import CipherSuite
from oracles import chacha_ref, gcm_ref

# Published vectors: GCM test cases 4 and 16, and the RFC 8439 AEAD example.
GCM_P = bytes.fromhex(
    "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a72"
    "1c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39")
GCM_A = bytes.fromhex("feedfacedeadbeeffeedfacedeadbeefabaddad2")
GCM_IV = bytes.fromhex("cafebabefacedbaddecaf888")
GCM_K = bytes.fromhex("feffe9928665731c6d6a8f9467308308")
KAT = [
    (CipherSuite.AES_128_GCM, GCM_K, GCM_IV, GCM_A, GCM_P,
     "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e"
     "21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091",
     "5bc94fbc3221a5db94fae95ae7121a47"),
    (CipherSuite.AES_256_GCM, GCM_K + GCM_K, GCM_IV, GCM_A, GCM_P,
     "522dc1f099567d07f47f37a32a84427d643a8cdcbfe5c0c97598a2bd2555d1aa"
     "8cb08e48590dbb3da7b08b1056828838c5f61e6393ba7a0abcc9f662",
     "76fc6ece0f4e1768cddf8853bb2d551b"),
    (CipherSuite.CHACHA20_POLY1305, bytes(range(0x80, 0xA0)),
     bytes.fromhex("070000004041424344454647"), bytes.fromhex("50515253c0c1c2c3c4c5c6c7"),
     b"Ladies and Gentlemen of the class of '99: If I could offer you only one tip for "
     b"the future, sunscreen would be it.",
     "d31a8d34648e60db7b86afbc53ef7ec2a4aded51296e08fea9e2b5a736ee62d6"
     "3dbea45e8ca9671282fafb69da92728b1a71de0a9e060b2905d6a5b67ecd3b36"
     "92ddbd7f2d778b8c9803aee328091b58fab324e4fad675945585808b4831d7bc"
     "3ff4def08e4b7a9de576d26586cec64b6116",
     "1ae10b594f09e26a7e902ecbd0600691"),
]


def run(suite, key, nonce, aad, data, mode, sizes):
    s = AeadStream(suite, key, nonce, aad, mode)
    out, pos = b"", 0
    for n in sizes:
        out += s.update(data[pos:pos + n])
        pos += n
    return out, s.finalize()


@pytest.mark.parametrize("suite, key, nonce, aad, pt, ct, tag", KAT)
@pytest.mark.parametrize("split", ["whole", "bytes", "odd"])
def test_known_answers_incremental(suite, key, nonce, aad, pt, ct, tag, split):
    sizes = {"whole": [len(pt)], "bytes": [1] * len(pt),
             "odd": [3, 7, 1, 13, 64, 200]}[split]
    c, t = run(suite, key, nonce, aad, pt, "seal", sizes)
    assert c.hex() == ct and t.hex() == tag
    p, t2 = run(suite, key, nonce, aad, c, "open", sizes)
    assert p == pt and t2.hex() == tag


@pytest.mark.parametrize("suite", list(CipherSuite))
def test_zero_length_record(suite):
    rng = random.Random(1)
    key, nonce, aad = rng.randbytes(suite.key_len), rng.randbytes(12), rng.randbytes(13)
    _, tag = run(suite, key, nonce, aad, b"", "seal", [])
    ref = gcm_ref if suite.is_gcm else chacha_ref
    assert tag == ref.seal(key, nonce, b"", aad)[1]


@settings(max_examples=40, deadline=None)
@given(suite=st.sampled_from(list(CipherSuite)), seed=st.integers(0, 2 ** 32),
       length=st.integers(0, 300), cuts=st.lists(st.integers(1, 50), max_size=20))
def test_matches_reference_under_any_split(suite, seed, length, cuts):
    rng = random.Random(seed)
    key, nonce, aad = rng.randbytes(suite.key_len), rng.randbytes(12), rng.randbytes(13)
    pt = rng.randbytes(length)
    sizes, left = [], length
    for c in cuts:
        if not left:
            break
        sizes.append(min(c, left))
        left -= sizes[-1]
    if left:
        sizes.append(left)
    ref = gcm_ref if suite.is_gcm else chacha_ref
    want_ct, want_tag = ref.seal(key, nonce, pt, aad)
    assert run(suite, key, nonce, aad, pt, "seal", sizes) == (want_ct, want_tag)
    assert run(suite, key, nonce, aad, want_ct, "open", sizes) == (pt, want_tag)


def test_open_then_seal_is_identity():
    suite = CipherSuite.AES_128_GCM
    key, nonce, aad = bytes(16), bytes(12), bytes(13)
    ct = bytes(range(100))
    pt, tag1 = run(suite, key, nonce, aad, ct, "open", [100])
    back, tag2 = run(suite, key, nonce, aad, pt, "seal", [100])
    assert back == ct and tag1 == tag2


def test_record_nonce_and_aad():
    gcm = record_nonce(CipherSuite.AES_128_GCM, b"\x01\x02\x03\x04", b"E" * 8, 9)
    assert gcm == b"\x01\x02\x03\x04" + b"E" * 8
    iv = bytes(range(12))
    cha = record_nonce(CipherSuite.CHACHA20_POLY1305, iv, b"", 0x0102)
    assert cha == iv[:10] + bytes([iv[10] ^ 1, iv[11] ^ 2])
    assert record_aad(1, 23, 0x0303, 5) == bytes(7) + b"\x01\x17\x03\x03\x00\x05"
