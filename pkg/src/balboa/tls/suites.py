"""TLS 1.2 AEAD cipher suites understood by the record engine."""

import enum
import hashlib

TAG_LEN = 16


class CipherSuite(enum.Enum):
    AES_128_GCM = ("AES-128-GCM", 16, 4, 8, "sha256")
    AES_256_GCM = ("AES-256-GCM", 32, 4, 8, "sha384")
    CHACHA20_POLY1305 = ("CHACHA20-POLY1305", 32, 12, 0, "sha256")

    def __init__(self, label, key_len, iv_len, explicit_nonce_len, prf_hash):
        self.label = label
        self.key_len = key_len
        self.iv_len = iv_len
        self.explicit_nonce_len = explicit_nonce_len
        self.prf_hash = prf_hash

    @property
    def tag_len(self):
        return TAG_LEN

    @property
    def is_gcm(self):
        return self is not CipherSuite.CHACHA20_POLY1305

    @property
    def hash_factory(self):
        return getattr(hashlib, self.prf_hash)

    @classmethod
    def from_code(cls, code):
        """Map an IANA cipher suite number to a supported suite, or None."""
        return _CODES.get(code)


# Key exchange and authentication do not matter to the record layer; only the
# bulk cipher and the PRF hash do.
_CODES = {
    0x009C: CipherSuite.AES_128_GCM,   # RSA
    0x009E: CipherSuite.AES_128_GCM,   # DHE_RSA
    0xC02B: CipherSuite.AES_128_GCM,   # ECDHE_ECDSA
    0xC02F: CipherSuite.AES_128_GCM,   # ECDHE_RSA
    0x009D: CipherSuite.AES_256_GCM,
    0x009F: CipherSuite.AES_256_GCM,
    0xC02C: CipherSuite.AES_256_GCM,
    0xC030: CipherSuite.AES_256_GCM,
    0xCCA8: CipherSuite.CHACHA20_POLY1305,  # ECDHE_RSA
    0xCCA9: CipherSuite.CHACHA20_POLY1305,  # ECDHE_ECDSA
    0xCCAA: CipherSuite.CHACHA20_POLY1305,  # DHE_RSA
}

SUITE_CODES = {
    CipherSuite.AES_128_GCM: 0xC02B,
    CipherSuite.AES_256_GCM: 0xC02C,
    CipherSuite.CHACHA20_POLY1305: 0xCCA9,
}
