"""UDP/TCP stub resolver used by all active scans.

The server address is injectable so fixture-mode scans talk real DNS wire
format to a local harness instead of production resolvers.
"""

from __future__ import annotations

import random
import socket
import struct
from typing import Optional, Tuple

from . import dnswire


class DnsError(Exception):
    pass


class DnsTimeout(DnsError):
    """No reply within the deadline (distinct from negative responses)."""


class StubResolver:
    def __init__(
        self,
        server: Tuple[str, int] = ("127.0.0.1", 53),
        timeout: float = 2.0,
        retries: int = 1,
        want_dnssec: bool = False,
        checking_disabled: bool = False,
    ):
        self.server = server
        self.timeout = timeout
        self.retries = retries
        self.want_dnssec = want_dnssec
        self.checking_disabled = checking_disabled

    def query(self, name: str, rtype: int,
              want_dnssec: Optional[bool] = None) -> dnswire.Message:
        """Resolve one question; falls back to TCP on truncation.

        Raises DnsTimeout when every attempt goes unanswered; all other
        outcomes (including NXDOMAIN and SERVFAIL) are returned messages.
        """
        do = self.want_dnssec if want_dnssec is None else want_dnssec
        qid = random.randrange(0, 0x10000)
        query = dnswire.make_query(
            name, rtype, qid, want_dnssec=do,
            checking_disabled=self.checking_disabled,
        )
        wire = dnswire.encode(query)
        last_exc: Optional[Exception] = None
        for _ in range(self.retries + 1):
            try:
                reply = self._udp_round(wire, qid)
            except socket.timeout as exc:
                last_exc = exc
                continue
            if reply.truncated:
                return self._tcp_round(wire, qid)
            return reply
        raise DnsTimeout(f"no reply from {self.server} for {name}") from last_exc

    def _udp_round(self, wire: bytes, qid: int) -> dnswire.Message:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            sock.settimeout(self.timeout)
            sock.sendto(wire, self.server)
            while True:
                data, _addr = sock.recvfrom(65535)
                try:
                    msg = dnswire.decode(data)
                except dnswire.WireError:
                    continue
                if msg.id == qid and msg.is_response:
                    return msg

    def _tcp_round(self, wire: bytes, qid: int) -> dnswire.Message:
        with socket.create_connection(self.server, timeout=self.timeout) as sock:
            sock.sendall(struct.pack("!H", len(wire)) + wire)
            header = _read_exact(sock, 2)
            (length,) = struct.unpack("!H", header)
            data = _read_exact(sock, length)
        msg = dnswire.decode(data)
        if msg.id != qid:
            raise DnsError("mismatched response id over TCP")
        return msg

    # convenience lookups -------------------------------------------

    def a_records(self, name: str) -> list:
        reply = self.query(name, dnswire.A)
        if reply.rcode != dnswire.NOERROR:
            return []
        return [r.address() for r in reply.answers if r.rtype == dnswire.A]

    def txt_records(self, name: str) -> dnswire.Message:
        return self.query(name, dnswire.TXT)


def _read_exact(sock: socket.socket, n: int) -> bytes:
    out = b""
    while len(out) < n:
        chunk = sock.recv(n - len(out))
        if not chunk:
            raise DnsError("TCP stream closed mid-message")
        out += chunk
    return out
