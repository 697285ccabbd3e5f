"""One intercepted TLS connection: handshake observation, keys, signaling, and
the two record streams."""

from __future__ import annotations

import logging
import threading

from . import signaling as sig
from .covert import IdentityRewriter
from .tls import handshake as hs
from .tls.keys import (DirectionKeys, SessionSecrets, derive_covert_keys,
                       derive_direction_keys)
from .tls.record import ZERO_MASK, RecordPlan, RecordStream
from .tls.suites import CipherSuite

log = logging.getLogger(__name__)


class Connection:
    """Session state for one descriptor.

    ``secret_source`` maps a client_random to a 48-byte master secret or None.
    Outgoing bytes go through :meth:`outgoing` (or :meth:`prepare_write` /
    :meth:`commit_write` when the kernel may accept a prefix), incoming bytes
    through :meth:`incoming`.  Callers serialize access with :attr:`lock`.
    """

    def __init__(self, role, mode, psk, secret_source, rewriter=None, pinned_key=None):
        self.role = sig.Role(role)
        self.mode = sig.Mode(mode)
        self.psk = bytes(psk)
        self.secret_source = secret_source
        self.rewriter = rewriter if rewriter is not None else IdentityRewriter()
        self.signal = sig.SignalingState(self.role, self.mode, pinned_key=pinned_key)
        self.lock = threading.RLock()
        self.out = RecordStream("out", self)
        self.inc = RecordStream("in", self)
        self.reason = None
        self.client_random = None
        self.server_random = None
        self.suite = None
        self.keys = None
        self._readers = {"out": hs.HandshakeReader(), "in": hs.HandshakeReader()}
        self._transcript = bytearray()
        self._seen_ske = False

    # data path

    def outgoing(self, data):
        return self.out.process(data)

    def incoming(self, data):
        return self.inc.process(data)

    def prepare_write(self, buf):
        return self.out.prepare_write(buf)

    def commit_write(self, n):
        self.out.commit_write(n)

    @property
    def passthrough(self):
        return self.signal.passthrough

    @property
    def active(self):
        return self.signal.phase is sig.Phase.ACTIVE

    def fail(self, reason):
        if self.reason is None:
            log.info("connection passthrough: %s", reason)
            self.reason = reason
        self.signal.fail()
        self.out.passthrough = True
        self.inc.passthrough = True

    # hooks called by the record streams

    def observe_handshake(self, stream, data):
        for mtype, body in self._readers[stream.direction].feed(data):
            self._transcript += hs.encode_message(mtype, body)
            if mtype == hs.CLIENT_HELLO:
                self.client_random = hs.hello_random(body)
            elif mtype == hs.SERVER_HELLO:
                hello = hs.parse_server_hello(body)
                self.server_random = hello.server_random
                self.suite = CipherSuite.from_code(hello.cipher_suite)
                if self.suite is None:
                    self.fail(f"unsupported cipher suite {hello.cipher_suite:#06x}")
                    return
            elif mtype == hs.SERVER_KEY_EXCHANGE and self.role is sig.Role.CLIENT:
                self._seen_ske = True
                pinned = self.signal.pinned_key
                ok = pinned is not None and sig.verify_server_key_exchange(
                    bytes(self._transcript), pinned)
                self.signal.server_key_checked(ok)
                if not ok:
                    self.fail("server key exchange did not verify against the pinned key")
                    return

    def _ensure_keys(self):
        if self.keys is not None:
            return True
        if self.client_random is None or self.server_random is None or self.suite is None:
            self.fail("handshake not observed")
            return False
        mk = self.secret_source(self.client_random)
        if mk is None:
            self.fail("no key-log line for this connection")
            return False
        secrets = SessionSecrets(bytes(mk), self.client_random, self.server_random, self.suite)
        client_write, server_write = derive_direction_keys(secrets)
        covert = derive_covert_keys(secrets.master_secret, self.psk)
        self.signal.covert_keys = covert
        reenc = covert.reenc_key(self.suite)
        if self.role is sig.Role.CLIENT:
            app_out, app_in = client_write, server_write
        else:
            app_out, app_in = server_write, client_write
        self.keys = {
            "app_out": app_out,
            "app_in": app_in,
            "cov_out": DirectionKeys(reenc, app_out.implicit_iv),
            "cov_in": DirectionKeys(reenc, app_in.implicit_iv),
        }
        return True

    def plan_record(self, stream, ctype, version, length):
        if self.signal.passthrough:
            return None
        if self.role is sig.Role.CLIENT and not self._seen_ske:
            self.fail("no ServerKeyExchange to authenticate the server")
            return None
        if not self._ensure_keys():
            return None
        k = self.keys
        st = self.signal
        ck = st.covert_keys
        if stream is self.out:
            rw = self.rewriter.outgoing
            if st.out_active:
                return RecordPlan(self.suite, k["app_out"], k["cov_out"], rw, True)
            if st.phase is sig.Phase.SEND_SIGNAL:
                return RecordPlan(self.suite, k["app_out"], None, rw, False,
                                  out_mask=ck.k_client,
                                  on_done=lambda m: st.signal_sent())
            if st.phase is sig.Phase.SEND_ACK:
                return RecordPlan(self.suite, k["app_out"], None, rw, False,
                                  out_mask=ck.k_server,
                                  on_done=lambda m: st.ack_sent())
            return RecordPlan(self.suite, k["app_out"], None, rw, False)

        rw = self.rewriter.incoming
        if st.in_active:
            return RecordPlan(self.suite, k["cov_in"], k["app_in"], rw, True)
        if st.phase is sig.Phase.AWAIT_SIGNAL:
            return RecordPlan(self.suite, k["app_in"], None, rw, False,
                              accept_masks=(ZERO_MASK, ck.k_client),
                              on_done=self._classified)
        if st.phase is sig.Phase.AWAIT_ACK:
            return RecordPlan(self.suite, k["app_in"], None, rw, False,
                              accept_masks=(ZERO_MASK, ck.k_server),
                              on_done=self._ack_checked)
        return RecordPlan(self.suite, k["app_in"], None, rw, False)

    def _classified(self, mask):
        if mask is None:
            result = sig.Classification.INVALID
        elif mask == ZERO_MASK:
            result = sig.Classification.NON_BALBOA
        else:
            result = sig.Classification.BALBOA
        self.signal.first_record_classified(result)
        if result is not sig.Classification.BALBOA:
            self.fail(f"first record classified {result.value}")

    def _ack_checked(self, mask):
        if mask is not None and mask != ZERO_MASK:
            self.signal.ack_seen()

    def stats(self):
        return {
            "phase": self.signal.phase.value,
            "reason": self.reason,
            "records_out": self.out.records,
            "records_in": self.inc.records,
            "ended": {d: st.ended for d, st in (("out", self.out), ("in", self.inc)) if st.ended},
            **self.rewriter.stats(),
        }
