"""RFC 2142 contact-alias validation over SMTP plus SOA RNAME probing.

The prober never sends mail: it opens a session, issues a single RCPT TO
and reads the reply code. Catch-all detection runs first because a
server accepting random recipients makes positive alias results
meaningless. Each SMTP session carries at most one RCPT probe, and one
domain costs at most seven sessions (catch-all + five aliases + the SOA
contact).
"""

from __future__ import annotations

import random
import re
import smtplib
import socket
import string
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, FrozenSet, Optional, Tuple

from . import dnswire
from .resolver import DnsTimeout, StubResolver

RFC_ALIASES = ("abuse", "hostmaster", "webmaster", "noc", "security")


class ProbeResult(Enum):
    VALID = "valid"
    INVALID = "invalid"
    CONN_ERROR = "conn_error"


class RfcSide(Enum):
    NO_MX_RECORD = "no_mx_record"
    CONN_ERROR = "conn_error"
    CATCH_ALL = "catch_all"
    NO_CONTACT_FOUND = "no_contact_found"
    CONTACT_FOUND = "contact_found"


class SoaSide(Enum):
    NO_SOA_RECORD = "no_soa_record"
    NO_MX_FOR_SOA = "no_mx_for_soa"
    CONN_ERROR = "conn_error"
    CATCH_ALL = "catch_all"
    NO_CONTACT_FOUND = "no_contact_found"
    CONTACT_FOUND = "contact_found"


@dataclass
class ReachabilityReport:
    domain: str
    rfc_side: RfcSide
    rfc_valid_aliases: FrozenSet[str] = frozenset()
    soa_side: SoaSide = SoaSide.NO_SOA_RECORD
    soa_contact: Optional[str] = None


class MxLookupError(Exception):
    """DNS transport failure while resolving MX (connection-level)."""


def resolve_primary_mx(domain: str, resolver: StubResolver) -> Optional[str]:
    """Mail host with the lowest preference value; ties break
    lexicographically. Returns None when the domain publishes no MX at
    all; an A record alone does not make a mail server here."""
    try:
        reply = resolver.query(domain, dnswire.MX)
    except DnsTimeout as exc:
        raise MxLookupError(str(exc)) from exc
    if reply.rcode == dnswire.SERVFAIL:
        raise MxLookupError(f"SERVFAIL for MX {domain}")
    if reply.rcode != dnswire.NOERROR:
        return None
    exchanges = sorted(
        (rec.mx_fields() for rec in reply.answers if rec.rtype == dnswire.MX),
        key=lambda pair: (pair[0], pair[1]),
    )
    if not exchanges:
        return None
    return exchanges[0][1].rstrip(".")


Endpoint = Tuple[str, int]


class SmtpProber:
    """SMTP transport with injectable endpoint mapping (fixture servers
    live on ephemeral local ports). Sessions to one mail host are
    serialized; enumeration defenses punish parallel hammering."""

    def __init__(self, helo: str = "probe.invalid",
                 sender: str = "prober@probe.invalid",
                 timeout: float = 5.0,
                 endpoint_for: Optional[Callable[[str], Endpoint]] = None,
                 rng: Optional[random.Random] = None):
        self.helo = helo
        self.sender = sender
        self.timeout = timeout
        self.endpoint_for = endpoint_for or (lambda host: (host, 25))
        self.rng = rng or random.Random()
        self._host_locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, host: str) -> threading.Lock:
        with self._locks_guard:
            return self._host_locks.setdefault(host, threading.Lock())

    def probe_address(self, mail_host: str, address: str) -> ProbeResult:
        """One RCPT TO in a fresh session. 2xx accepts the recipient;
        5xx denies it; anything transient or transport-level is a
        connection error, never an assertion of nonexistence."""
        host, port = self.endpoint_for(mail_host)
        with self._lock_for(mail_host):
            try:
                with smtplib.SMTP(host=host, port=port, timeout=self.timeout,
                                  local_hostname=self.helo) as session:
                    code, _ = session.mail(self.sender)
                    if code >= 400:
                        return ProbeResult.CONN_ERROR
                    code, _ = session.rcpt(f"<{address}>")
            except (smtplib.SMTPException, OSError, socket.timeout):
                return ProbeResult.CONN_ERROR
        if 200 <= code < 300:
            return ProbeResult.VALID
        if 500 <= code < 600:
            return ProbeResult.INVALID
        return ProbeResult.CONN_ERROR

    def detect_catch_all(self, mail_host: str, domain: str) -> ProbeResult:
        """VALID here means the server validated a random 16-character
        local part, i.e. it accepts everything."""
        local = "".join(self.rng.choices(string.ascii_lowercase + string.digits, k=16))
        return self.probe_address(mail_host, f"{local}@{domain}")


_EMAIL_RE = re.compile(r"^[A-Za-z0-9!#$%&'*+./=?^_`{|}~-]+@[A-Za-z0-9.-]+$")


class NoSoaRecord(Exception):
    pass


def extract_soa_contact(domain: str, resolver: StubResolver) -> Optional[str]:
    """Email address from the SOA RNAME field: the first label (with
    ``\\.`` escapes honored) is the local part, the remainder the mail
    domain. Returns None for syntactically hopeless values; raises
    NoSoaRecord when the domain has no SOA at all."""
    try:
        reply = resolver.query(domain, dnswire.SOA)
    except DnsTimeout as exc:
        raise MxLookupError(str(exc)) from exc
    soa = [r for r in reply.answers if r.rtype == dnswire.SOA]
    if reply.rcode != dnswire.NOERROR or not soa:
        raise NoSoaRecord(domain)
    rname = soa[0].soa_fields()["rname"]
    labels = dnswire.split_labels(rname)
    if len(labels) < 2:
        return None
    local = labels[0]
    mail_domain = ".".join(labels[1:])
    email = f"{local}@{mail_domain}"
    if not _EMAIL_RE.match(email):
        return None
    return email


@dataclass
class AssessOptions:
    fast: bool = False  # stop alias probing at the first valid contact


def assess(domain: str, resolver: StubResolver, smtp: SmtpProber,
           options: Optional[AssessOptions] = None) -> ReachabilityReport:
    """Full reachability assessment; both pipelines classify by the
    first failing stage, so every domain lands in exactly one category
    per side. Catch-all results are cached per (mail host, domain)
    within one assessment, keeping the per-domain session budget at
    seven (catch-all + five aliases + the SOA contact)."""
    options = options or AssessOptions()
    catch_all_cache: Dict[Tuple[str, str], ProbeResult] = {}
    rfc_side, valid_aliases = _assess_rfc_side(domain, resolver, smtp, options,
                                               catch_all_cache)
    soa_side, contact = _assess_soa_side(domain, resolver, smtp, catch_all_cache)
    return ReachabilityReport(
        domain=domain, rfc_side=rfc_side,
        rfc_valid_aliases=frozenset(valid_aliases),
        soa_side=soa_side, soa_contact=contact,
    )


def _cached_catch_all(smtp: SmtpProber, cache: Dict[Tuple[str, str], ProbeResult],
                      mail_host: str, domain: str) -> ProbeResult:
    key = (mail_host, domain.lower())
    if key not in cache:
        cache[key] = smtp.detect_catch_all(mail_host, domain)
    return cache[key]


def _assess_rfc_side(domain: str, resolver: StubResolver, smtp: SmtpProber,
                     options: AssessOptions,
                     catch_all_cache: Dict[Tuple[str, str], ProbeResult]
                     ) -> Tuple[RfcSide, set]:
    try:
        mail_host = resolve_primary_mx(domain, resolver)
    except MxLookupError:
        return RfcSide.CONN_ERROR, set()
    if mail_host is None:
        return RfcSide.NO_MX_RECORD, set()
    catch_all = _cached_catch_all(smtp, catch_all_cache, mail_host, domain)
    if catch_all is ProbeResult.CONN_ERROR:
        return RfcSide.CONN_ERROR, set()
    if catch_all is ProbeResult.VALID:
        # positive alias answers would be meaningless; do not record any
        return RfcSide.CATCH_ALL, set()
    valid = set()
    saw_reject = False
    for alias in RFC_ALIASES:
        outcome = smtp.probe_address(mail_host, f"{alias}@{domain}")
        if outcome is ProbeResult.VALID:
            valid.add(alias)
            if options.fast:
                break
        elif outcome is ProbeResult.INVALID:
            saw_reject = True
    if valid:
        return RfcSide.CONTACT_FOUND, valid
    if saw_reject:
        return RfcSide.NO_CONTACT_FOUND, set()
    return RfcSide.CONN_ERROR, set()


def _assess_soa_side(domain: str, resolver: StubResolver, smtp: SmtpProber,
                     catch_all_cache: Dict[Tuple[str, str], ProbeResult]
                     ) -> Tuple[SoaSide, Optional[str]]:
    try:
        contact = extract_soa_contact(domain, resolver)
    except NoSoaRecord:
        return SoaSide.NO_SOA_RECORD, None
    except MxLookupError:
        return SoaSide.CONN_ERROR, None
    if contact is None:
        return SoaSide.NO_CONTACT_FOUND, None
    mail_domain = contact.rsplit("@", 1)[1]
    try:
        mail_host = resolve_primary_mx(mail_domain, resolver)
    except MxLookupError:
        return SoaSide.CONN_ERROR, contact
    if mail_host is None:
        return SoaSide.NO_MX_FOR_SOA, contact
    catch_all = _cached_catch_all(smtp, catch_all_cache, mail_host, mail_domain)
    if catch_all is ProbeResult.CONN_ERROR:
        return SoaSide.CONN_ERROR, contact
    if catch_all is ProbeResult.VALID:
        return SoaSide.CATCH_ALL, contact
    outcome = smtp.probe_address(mail_host, contact)
    if outcome is ProbeResult.VALID:
        return SoaSide.CONTACT_FOUND, contact
    if outcome is ProbeResult.INVALID:
        return SoaSide.NO_CONTACT_FOUND, contact
    return SoaSide.CONN_ERROR, contact
