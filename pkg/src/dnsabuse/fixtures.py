"""Fixture-mode harness servers.

Fixture mode points every scanner at local servers speaking the real
protocols: a DNS server (UDP + TCP) answering from an in-memory zone, an
SMTP server with configurable RCPT policy, and a small HTTP server. The
signed-hierarchy builder produces a root/tld/domain chain with real
signatures so the validation path is exercised end to end.
"""

from __future__ import annotations

import atexit
import http.server
import socket
import socketserver
import struct
import threading
import time
from typing import Callable, Dict, List, Optional, Tuple

from . import dnssec, dnswire
from .dnswire import Message, Record


class Zone:
    """Flat record store keyed by (canonical name, rtype)."""

    def __init__(self):
        self.records: Dict[Tuple[str, int], List[Record]] = {}
        self.names: set = set()
        self.denials: Dict[str, List[Record]] = {}

    def add(self, *records: Record) -> None:
        for rec in records:
            name = dnswire.canonical_name(rec.name)
            self.records.setdefault((name, rec.rtype), []).append(rec)
            self.names.add(name)

    def remove(self, name: str, rtype: int) -> None:
        self.records.pop((dnswire.canonical_name(name), rtype), None)

    def clear(self) -> None:
        self.records.clear()
        self.names.clear()
        self.denials.clear()

    def add_denial(self, apex: str, *records: Record) -> None:
        """Records to attach on negative answers under ``apex`` (DO set)."""
        self.denials.setdefault(dnswire.canonical_name(apex), []).extend(records)

    def lookup(self, name: str, rtype: int) -> List[Record]:
        return self.records.get((dnswire.canonical_name(name), rtype), [])

    def has_name(self, name: str) -> bool:
        return dnswire.canonical_name(name) in self.names

    def denial_for(self, name: str) -> List[Record]:
        labels = dnswire.canonical_name(name).rstrip(".").split(".")
        for i in range(len(labels)):
            apex = ".".join(labels[i:]) + "."
            if apex in self.denials:
                return self.denials[apex]
        return []


def zone_answer(zone: Zone, query: Message) -> Message:
    """Authoritative answer from a zone, attaching covering RRSIGs and
    denial records when the client set the DO bit."""
    qname, qtype, _qclass = query.question
    response = dnswire.make_response(query)
    answers = list(zone.lookup(qname, qtype))
    if answers and query.edns_do and qtype != dnswire.RRSIG:
        for sig in zone.lookup(qname, dnswire.RRSIG):
            if sig.rrsig_fields()["type_covered"] == qtype:
                answers.append(sig)
    if answers:
        response.answers = answers
        return response
    if zone.has_name(qname):
        return response  # NODATA
    response.set_rcode(dnswire.NXDOMAIN)
    if query.edns_do:
        response.authority = list(zone.denial_for(qname))
    return response


class _UdpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        data, sock = self.request
        server: DnsFixtureServer = self.server.owner  # type: ignore[attr-defined]
        reply = server.reply_wire(data)
        if reply is not None:
            sock.sendto(reply, self.client_address)


class _TcpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: DnsFixtureServer = self.server.owner  # type: ignore[attr-defined]
        try:
            header = self.request.recv(2)
            if len(header) < 2:
                return
            (length,) = struct.unpack("!H", header)
            data = b""
            while len(data) < length:
                chunk = self.request.recv(length - len(data))
                if not chunk:
                    return
                data += chunk
            reply = server.reply_wire(data, tcp=True)
            if reply is not None:
                self.request.sendall(struct.pack("!H", len(reply)) + reply)
        except OSError:
            pass


class _ThreadingUdp(socketserver.ThreadingUDPServer):
    allow_reuse_address = True


class _ThreadingTcp(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class DnsFixtureServer:
    """DNS harness bound to an ephemeral local port (UDP and TCP).

    ``behavior`` overrides normal zone answering: it receives the decoded
    query and returns a Message, or None to drop the query (simulating a
    filtered host).
    """

    def __init__(self, zone: Optional[Zone] = None,
                 behavior: Optional[Callable[[Message], Optional[Message]]] = None,
                 host: str = "127.0.0.1", udp_payload_limit: int = 4096):
        self.zone = zone if zone is not None else Zone()
        self.behavior = behavior
        self.udp_payload_limit = udp_payload_limit
        self._udp = _ThreadingUdp((host, 0), _UdpHandler)
        self._udp.owner = self  # type: ignore[attr-defined]
        port = self._udp.server_address[1]
        self._tcp = _ThreadingTcp((host, port), _TcpHandler)
        self._tcp.owner = self  # type: ignore[attr-defined]
        self.address = (host, port)
        self._threads: List[threading.Thread] = []

    @property
    def port(self) -> int:
        return self.address[1]

    def reply_wire(self, data: bytes, tcp: bool = False) -> Optional[bytes]:
        try:
            query = dnswire.decode(data)
        except dnswire.WireError:
            return None
        if query.question is None:
            return None
        if self.behavior is not None:
            response = self.behavior(query)
        else:
            response = zone_answer(self.zone, query)
        if response is None:
            return None
        if tcp:
            return dnswire.encode(response)
        limit = min(query.edns_udp_size or 512, self.udp_payload_limit)
        return dnswire.encode(response, max_size=max(limit, 512))

    def start(self) -> "DnsFixtureServer":
        for srv in (self._udp, self._tcp):
            thread = threading.Thread(
                target=lambda s=srv: s.serve_forever(poll_interval=0.05),
                daemon=True)
            thread.start()
            self._threads.append(thread)
        return self

    def stop(self) -> None:
        for srv in (self._udp, self._tcp):
            srv.shutdown()
            srv.server_close()

    def __enter__(self) -> "DnsFixtureServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def silent_port() -> int:
    """A bound UDP port that never answers (closed-or-filtered target)."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    _SILENT_SOCKETS.append(sock)  # keep alive so the port stays bound
    return port


_SILENT_SOCKETS: List[socket.socket] = []


def _close_silent_sockets() -> None:
    while _SILENT_SOCKETS:
        _SILENT_SOCKETS.pop().close()


atexit.register(_close_silent_sockets)


# ----------------------------------------------------------------------
# Signed DNSSEC hierarchy


class SignedHierarchy:
    """Three-level signed fixture: root -> tld -> domains.

    Domains are added with independent control over which DNSSEC records
    they publish, so every presence combination (and tampered/expired
    variants) can be served from one zone.
    """

    def __init__(self, tld: str = "test", now: Optional[int] = None,
                 lifetime: int = 30 * 86400):
        self.zone = Zone()
        self.tld = dnswire.canonical_name(tld)
        self.now = int(time.time()) if now is None else now
        self._incept = self.now - 3600
        self._expire = self.now + lifetime

        self.root_ksk = dnssec.generate_key(".", ksk=True)
        self.root_zsk = dnssec.generate_key(".")
        self.tld_ksk = dnssec.generate_key(self.tld, ksk=True)
        self.tld_zsk = dnssec.generate_key(self.tld)

        self._publish_apex(".", self.root_ksk, self.root_zsk)
        self._publish_apex(self.tld, self.tld_ksk, self.tld_zsk)
        tld_ds = dnssec.make_ds(self.tld, self.tld_ksk.dnskey)
        self.zone.add(tld_ds)
        self.zone.add(self._sign([tld_ds], self.root_zsk, "."))

    @property
    def trust_anchor(self) -> Record:
        return dnssec.make_ds(".", self.root_ksk.dnskey)

    def _sign(self, records, key, signer, expiration=None) -> Record:
        return dnssec.sign_rrset(
            records, key, signer, self._incept,
            self._expire if expiration is None else expiration,
        )

    def _publish_apex(self, name: str, ksk, zsk) -> None:
        dnskeys = [ksk.dnskey, zsk.dnskey]
        self.zone.add(*dnskeys)
        self.zone.add(self._sign(dnskeys, ksk, name))
        suffix = "" if name == "." else name
        soa = Record.soa(name, "ns." + suffix, "hostmaster." + suffix)
        self.zone.add(soa)
        self.zone.add(self._sign([soa], zsk, name))

    def add_domain(self, label: str, *, publish_ds: bool = True,
                   publish_dnskey: bool = True, publish_rrsig: bool = True,
                   tamper: bool = False, expired: bool = False,
                   denial: Optional[str] = None,
                   address: str = "192.0.2.10") -> str:
        """Add ``<label>.<tld>`` with the requested DNSSEC posture.

        ``denial`` selects the negative-answer style: "nsec", "nsec3"
        or None. Returns the fully qualified domain name.
        """
        name = f"{label}.{self.tld}"
        ksk = dnssec.generate_key(name, ksk=True)
        zsk = dnssec.generate_key(name)
        expiration = (self.now - 60) if expired else None

        soa = Record.soa(name, f"ns.{name}", f"hostmaster.{name}")
        self.zone.add(soa, Record.a(name, address))

        if publish_dnskey:
            self.zone.add(ksk.dnskey, zsk.dnskey)
        if publish_rrsig:
            soa_sig = self._sign([soa], zsk, name, expiration=expiration)
            if tamper:
                soa_sig = _corrupt_signature(soa_sig)
            self.zone.add(soa_sig)
            if publish_dnskey:
                self.zone.add(self._sign([ksk.dnskey, zsk.dnskey], ksk, name,
                                         expiration=expiration))
        if publish_ds:
            ds = dnssec.make_ds(name, ksk.dnskey)
            self.zone.add(ds)
            self.zone.add(self._sign([ds], self.tld_zsk, self.tld))
        if denial == "nsec":
            nsec = Record.nsec(name, f"zzz.{name}",
                               (dnswire.A, dnswire.SOA, dnswire.RRSIG, dnswire.NSEC))
            self.zone.add_denial(name, nsec,
                                 self._sign([nsec], zsk, name, expiration=expiration))
        elif denial == "nsec3":
            nsec3 = Record.nsec3(f"abcdef0123456789.{name}", 1, 0, 5, b"\xab\xcd",
                                 b"\x01" * 20, (dnswire.A, dnswire.SOA))
            self.zone.add_denial(name, nsec3,
                                 self._sign([nsec3], zsk, name, expiration=expiration))
        return name


def _corrupt_signature(rrsig: Record) -> Record:
    rdata = bytearray(rrsig.rdata)
    rdata[-1] ^= 0x01
    return Record(rrsig.name, rrsig.rtype, rrsig.rclass, rrsig.ttl, bytes(rdata))


# ----------------------------------------------------------------------
# SMTP fixture


class SmtpFixtureServer:
    """Line-based SMTP server with a pluggable RCPT policy.

    ``rcpt_policy`` maps a recipient address to a reply code; the
    convenience constructors cover the behaviors the contact prober has
    to distinguish (specific accepted aliases, reject-all, catch-all).
    """

    def __init__(self, rcpt_policy: Callable[[str], int],
                 host: str = "127.0.0.1", banner: str = "fixture ESMTP"):
        self.rcpt_policy = rcpt_policy
        self.banner = banner
        handler = self._make_handler()
        self._server = _ThreadingTcp((host, 0), handler)
        self.address = (host, self._server.server_address[1])
        self._thread: Optional[threading.Thread] = None

    @classmethod
    def accepting(cls, *locals_ok: str, **kw) -> "SmtpFixtureServer":
        ok = {l.lower() for l in locals_ok}

        def policy(address: str) -> int:
            return 250 if address.split("@", 1)[0].lower() in ok else 550

        return cls(policy, **kw)

    @classmethod
    def reject_all(cls, **kw) -> "SmtpFixtureServer":
        return cls(lambda _addr: 550, **kw)

    @classmethod
    def catch_all(cls, **kw) -> "SmtpFixtureServer":
        return cls(lambda _addr: 250, **kw)

    @property
    def port(self) -> int:
        return self.address[1]

    def _make_handler(self):
        owner = self

        class Handler(socketserver.StreamRequestHandler):
            def _send(self, text: str) -> None:
                self.wfile.write((text + "\r\n").encode("ascii"))

            def handle(self):
                self._send(f"220 {owner.banner}")
                while True:
                    line = self.rfile.readline()
                    if not line:
                        return
                    cmd = line.decode("ascii", errors="replace").strip()
                    verb = cmd.split(":", 1)[0].split(" ", 1)[0].upper()
                    if verb in ("EHLO", "HELO"):
                        self._send("250 fixture")
                    elif verb == "MAIL":
                        self._send("250 2.1.0 ok")
                    elif verb == "RCPT":
                        address = cmd.split(":", 1)[-1].strip().strip("<>")
                        code = owner.rcpt_policy(address)
                        msg = "2.1.5 ok" if 200 <= code < 300 else "5.1.1 no such user"
                        self._send(f"{code} {msg}")
                    elif verb == "QUIT":
                        self._send("221 bye")
                        return
                    elif verb in ("RSET", "NOOP"):
                        self._send("250 ok")
                    else:
                        self._send("502 command not implemented")

        return Handler

    def start(self) -> "SmtpFixtureServer":
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05),
            daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "SmtpFixtureServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# ----------------------------------------------------------------------
# HTTP fixture


class HttpFixtureServer:
    """Tiny HTTP server: routes map paths to (status, body) pairs."""

    def __init__(self, routes: Dict[str, Tuple[int, bytes]],
                 host: str = "127.0.0.1"):
        self.routes = dict(routes)
        owner = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_GET(self):
                status, body = owner.routes.get(self.path, (404, b"not here"))
                self.send_response(status)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self._server = http.server.ThreadingHTTPServer((host, 0), Handler)
        self.address = (host, self._server.server_address[1])
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self.address[1]

    def start(self) -> "HttpFixtureServer":
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05),
            daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "HttpFixtureServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
