"""SPF check_host emulation.

Evaluates published v=spf1 policies against a probe identity, with the
two hard limits that dominate real-world permanent errors: at most 10
lookup-triggering terms (include, a, mx, ptr, exists, redirect) and at
most 2 void lookups. Detail strings for permanent errors match the
buckets used in reporting ("Too many DNS lookups", "Two or more SPF
records found", "Void lookup limit of 2 exceeded", "More than 10 MX
records returned", "Invalid IP4 address", "Invalid IP6 address").
"""

from __future__ import annotations

import ipaddress
import re
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from . import dnswire
from .resolver import DnsTimeout, StubResolver

MAX_DNS_LOOKUPS = 10
MAX_VOID_LOOKUPS = 2
MAX_MX_RECORDS = 10


class SpfFetchStatus(Enum):
    NO_RECORD = "no_record"
    NO_ERROR = "no_error"
    NXDOMAIN = "nxdomain"
    SERVFAIL = "servfail"
    REFUSED = "refused"
    TIMEOUT = "timeout"
    ERROR = "error"
    AUTH_FAIL = "auth_fail"
    TEMPORARY = "temporary"


class SpfResult(Enum):
    NONE = "none"
    NEUTRAL = "neutral"
    PASS = "pass"
    FAIL = "fail"
    SOFTFAIL = "softfail"
    PERMERROR = "permerror"
    TEMPERROR = "temperror"


@dataclass
class SpfOutcome:
    domain: str
    fetch_status: SpfFetchStatus
    result: Optional[SpfResult] = None
    lookup_count: int = 0
    void_lookup_count: int = 0
    error_detail: Optional[str] = None


class _PermError(Exception):
    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class _TempError(Exception):
    pass


_QUALIFIERS = {"+": SpfResult.PASS, "-": SpfResult.FAIL,
               "~": SpfResult.SOFTFAIL, "?": SpfResult.NEUTRAL}

_MECH_RE = re.compile(
    r"^(?P<qual>[+\-~?])?(?P<name>[a-zA-Z][a-zA-Z0-9_.\-]*)"
    r"(?::(?P<value>[^/]*))?(?P<cidr>/.*)?$"
)


class _Session:
    """Per-evaluation state shared across recursive check_host calls."""

    def __init__(self, resolver: StubResolver, client_ip: str, sender: str,
                 helo: str):
        self.resolver = resolver
        self.ip = ipaddress.ip_address(client_ip)
        self.sender = sender if "@" in sender else f"postmaster@{sender}"
        self.helo = helo
        self.lookups = 0
        self.voids = 0

    def charge_lookup(self) -> None:
        self.lookups += 1
        if self.lookups > MAX_DNS_LOOKUPS:
            raise _PermError("Too many DNS lookups")

    def dns(self, name: str, rtype: int) -> List[dnswire.Record]:
        """One DNS lookup with void accounting."""
        try:
            reply = self.resolver.query(name, rtype)
        except DnsTimeout as exc:
            raise _TempError(str(exc)) from exc
        if reply.rcode == dnswire.NXDOMAIN:
            self._charge_void()
            return []
        if reply.rcode != dnswire.NOERROR:
            raise _TempError(f"rcode {reply.rcode} for {name}")
        records = [r for r in reply.answers if r.rtype == rtype]
        if not records:
            self._charge_void()
        return records

    def _charge_void(self) -> None:
        self.voids += 1
        if self.voids > MAX_VOID_LOOKUPS:
            raise _PermError("Void lookup limit of 2 exceeded")


def _expand_macros(text: str, session: _Session, domain: str) -> str:
    """RFC 7208 macro expansion for the subset used in domain-specs."""
    out: List[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch != "%":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(text):
            raise _PermError("truncated macro")
        nxt = text[i + 1]
        if nxt == "%":
            out.append("%")
            i += 2
            continue
        if nxt == "_":
            out.append(" ")
            i += 2
            continue
        if nxt == "-":
            out.append("%20")
            i += 2
            continue
        if nxt != "{":
            raise _PermError(f"bad macro escape %{nxt}")
        end = text.find("}", i)
        if end < 0:
            raise _PermError("unterminated macro")
        body = text[i + 2:end]
        out.append(_macro_value(body, session, domain))
        i = end + 1
    return "".join(out)


def _macro_value(body: str, session: _Session, domain: str) -> str:
    match = re.match(r"^([slodiphvcrt])(\d*)(r?)([.\-+,/_=]*)$", body, re.IGNORECASE)
    if not match:
        raise _PermError(f"bad macro {{{body}}}")
    letter, digits, reverse, delims = match.groups()
    local, _, sender_domain = session.sender.partition("@")
    if letter.lower() == "s":
        value = session.sender
    elif letter.lower() == "l":
        value = local
    elif letter.lower() == "o":
        value = sender_domain
    elif letter.lower() == "d":
        value = domain
    elif letter.lower() == "i":
        value = (str(session.ip) if session.ip.version == 4
                 else ".".join(session.ip.exploded.replace(":", "")))
    elif letter.lower() == "h":
        value = session.helo
    elif letter.lower() == "v":
        value = "in-addr" if session.ip.version == 4 else "ip6"
    else:
        raise _PermError(f"unsupported macro {{{body}}}")
    parts = re.split("[" + re.escape(delims or ".") + "]", value)
    if reverse:
        parts.reverse()
    if digits:
        parts = parts[-int(digits):]
    return ".".join(parts)


def _cidr_widths(cidr: Optional[str]) -> Tuple[int, int]:
    """(v4, v6) prefix widths from a dual-cidr suffix like /24//64."""
    v4, v6 = 32, 128
    if cidr:
        m = re.match(r"^(?:/(\d+))?(?:(?://)(\d+))?$", cidr)
        if not m or cidr == "/":
            raise _PermError(f"bad cidr {cidr!r}")
        if m.group(1) is not None:
            v4 = int(m.group(1))
        if m.group(2) is not None:
            v6 = int(m.group(2))
        if v4 > 32 or v6 > 128:
            raise _PermError(f"bad cidr {cidr!r}")
    return v4, v6


def _ip_in(session: _Session, addresses: List[str], v4len: int, v6len: int) -> bool:
    for addr in addresses:
        try:
            candidate = ipaddress.ip_address(addr)
        except ValueError:
            continue
        if candidate.version != session.ip.version:
            continue
        width = v4len if candidate.version == 4 else v6len
        net = ipaddress.ip_network(f"{candidate}/{width}", strict=False)
        if session.ip in net:
            return True
    return False


def _check_host(session: _Session, domain: str, depth: int = 0) -> SpfResult:
    if depth > 20:  # unreachable behind the lookup limit; belt and braces
        raise _PermError("include recursion too deep")
    records = session.dns(domain, dnswire.TXT)
    spf = [r.txt_value() for r in records
           if r.txt_value().lower() == "v=spf1"
           or r.txt_value().lower().startswith("v=spf1 ")]
    if not spf:
        return SpfResult.NONE
    if len(spf) > 1:
        raise _PermError("Two or more SPF records found")
    terms = spf[0].split()[1:]

    redirect: Optional[str] = None
    seen_modifiers = set()
    mechanisms: List[Tuple[SpfResult, str, Optional[str], Optional[str]]] = []
    for term in terms:
        if "=" in term.split(":", 1)[0]:
            name, _, value = term.partition("=")
            name = name.lower()
            if name in ("redirect", "exp"):
                if name in seen_modifiers:
                    raise _PermError(f"duplicate {name} modifier")
                seen_modifiers.add(name)
                if name == "redirect":
                    redirect = value
            continue  # unknown modifiers are ignored
        m = _MECH_RE.match(term)
        if not m:
            raise _PermError(f"unparsable term {term!r}")
        qualifier = _QUALIFIERS[m.group("qual") or "+"]
        mechanisms.append((qualifier, m.group("name").lower(),
                           m.group("value"), m.group("cidr")))

    for qualifier, name, value, cidr in mechanisms:
        matched = _match_mechanism(session, domain, name, value, cidr, depth)
        if matched:
            return qualifier

    if redirect is not None:
        session.charge_lookup()
        target = _expand_macros(redirect, session, domain)
        result = _check_host(session, target, depth + 1)
        if result is SpfResult.NONE:
            raise _PermError("redirect target has no SPF record")
        return result
    # no mechanism matched, no redirect: no definite assertion
    return SpfResult.NONE


def _match_mechanism(session: _Session, domain: str, name: str,
                     value: Optional[str], cidr: Optional[str],
                     depth: int = 0) -> bool:
    if name == "all":
        if cidr:
            raise _PermError("all takes no cidr")
        return True

    if name == "include":
        if not value:
            raise _PermError("include needs a domain")
        session.charge_lookup()
        target = _expand_macros(value, session, domain)
        sub = _check_host(session, target, depth + 1)
        if sub is SpfResult.PASS:
            return True
        if sub in (SpfResult.FAIL, SpfResult.SOFTFAIL, SpfResult.NEUTRAL):
            return False
        if sub is SpfResult.TEMPERROR:
            raise _TempError("include target temperror")
        raise _PermError("include target has no usable SPF record")

    if name == "a":
        session.charge_lookup()
        v4len, v6len = _cidr_widths(cidr)
        target = _expand_macros(value, session, domain) if value else domain
        rtype = dnswire.A if session.ip.version == 4 else dnswire.AAAA
        answers = [r.address() for r in session.dns(target, rtype)]
        return _ip_in(session, answers, v4len, v6len)

    if name == "mx":
        session.charge_lookup()
        v4len, v6len = _cidr_widths(cidr)
        target = _expand_macros(value, session, domain) if value else domain
        exchanges = session.dns(target, dnswire.MX)
        if len(exchanges) > MAX_MX_RECORDS:
            raise _PermError("More than 10 MX records returned")
        rtype = dnswire.A if session.ip.version == 4 else dnswire.AAAA
        for rec in exchanges:
            _, exchange = rec.mx_fields()
            answers = [r.address() for r in session.dns(exchange, rtype)]
            if _ip_in(session, answers, v4len, v6len):
                return True
        return False

    if name == "ptr":
        warnings.warn("the ptr mechanism is deprecated and slow; "
                      "policies should not rely on it", stacklevel=4)
        session.charge_lookup()
        target = _expand_macros(value, session, domain) if value else domain
        reverse = session.ip.reverse_pointer
        names = [r.target().rstrip(".") for r in session.dns(reverse, dnswire.PTR)]
        rtype = dnswire.A if session.ip.version == 4 else dnswire.AAAA
        for candidate in names[:10]:
            addresses = [r.address() for r in session.dns(candidate, rtype)]
            if not _ip_in(session, addresses, 32, 128):
                continue
            if candidate.lower() == target.lower().rstrip(".") \
                    or candidate.lower().endswith("." + target.lower().rstrip(".")):
                return True
        return False

    if name == "ip4":
        if not value:
            raise _PermError("Invalid IP4 address: ip4:")
        try:
            net = ipaddress.IPv4Network(value + (cidr or ""), strict=False)
        except ValueError:
            raise _PermError(f"Invalid IP4 address: ip4:{value}{cidr or ''}")
        return session.ip.version == 4 and session.ip in net

    if name == "ip6":
        if not value:
            raise _PermError("Invalid IP6 address: ip6:")
        try:
            net = ipaddress.IPv6Network(value + (cidr or ""), strict=False)
        except ValueError:
            raise _PermError(f"Invalid IP6 address: ip6:{value}{cidr or ''}")
        return session.ip.version == 6 and session.ip in net

    if name == "exists":
        if not value:
            raise _PermError("exists needs a domain")
        session.charge_lookup()
        target = _expand_macros(value, session, domain)
        return bool(session.dns(target, dnswire.A))

    raise _PermError(f"unknown mechanism {name!r}")


def evaluate_spf(domain: str, probe_identity: Tuple[str, str, str],
                 resolver: StubResolver) -> SpfOutcome:
    """Fetch and evaluate the SPF policy of ``domain``.

    ``probe_identity`` is (client_ip, helo, sender). A missing record
    yields result None: without a policy no assertion about the sender
    can be made, and the receiving side decides alone.
    """
    client_ip, helo, sender = probe_identity
    try:
        reply = resolver.query(domain, dnswire.TXT)
    except DnsTimeout:
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.TIMEOUT)
    except OSError as exc:
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.TEMPORARY,
                          error_detail=str(exc))
    if reply.rcode == dnswire.NXDOMAIN:
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.NXDOMAIN)
    if reply.rcode == dnswire.SERVFAIL:
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.SERVFAIL)
    if reply.rcode == dnswire.REFUSED:
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.REFUSED)
    if reply.rcode == 9:  # NOTAUTH
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.AUTH_FAIL)
    if reply.rcode != dnswire.NOERROR:
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.ERROR,
                          error_detail=f"rcode {reply.rcode}")
    texts = [r.txt_value() for r in reply.answers if r.rtype == dnswire.TXT]
    spf_records = [t for t in texts
                   if t.lower() == "v=spf1" or t.lower().startswith("v=spf1 ")]
    if not spf_records:
        return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.NO_RECORD,
                          result=SpfResult.NONE)

    session = _Session(resolver, client_ip, sender, helo)
    try:
        if len(spf_records) > 1:
            raise _PermError("Two or more SPF records found")
        result = _check_host(session, domain)
        detail = None
    except _PermError as exc:
        result, detail = SpfResult.PERMERROR, exc.detail
    except _TempError as exc:
        result, detail = SpfResult.TEMPERROR, str(exc)
    return SpfOutcome(domain=domain, fetch_status=SpfFetchStatus.NO_ERROR,
                      result=result, lookup_count=min(session.lookups, MAX_DNS_LOOKUPS),
                      void_lookup_count=session.voids, error_detail=detail)
