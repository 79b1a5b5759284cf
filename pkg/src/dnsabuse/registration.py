"""Registration-data collection (RDAP preferred, WHOIS port-43 fallback)
and registrar identification against the accredited-registrar directory.

Identification is a two-step lookup: a valid IANA ID wins outright; when
it is absent or bogus the raw registrar name is normalized and matched
against the alias table. Distinct IANA IDs are never merged, even when
names point at one parent company.
"""

from __future__ import annotations

import csv
import re
import socket
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Dict, Iterable, Optional, Sequence, Tuple

import requests

from .domains import RegisteredDomain
from .feeds import parse_timestamp


class Source(Enum):
    RDAP = "rdap"
    WHOIS = "whois"
    UNAVAILABLE = "unavailable"


class Resolution(Enum):
    BY_IANA_ID = "by_iana_id"
    BY_NAME_MATCH = "by_name_match"
    UNRESOLVED = "unresolved"


class FetchTimeout(Exception):
    """Transport deadline hit; the fetch may be retried."""


class RateLimited(Exception):
    """The remote side asked us to back off."""


@dataclass
class RegistrationRecord:
    domain: str
    source: Source
    raw_registrar_name: Optional[str] = None
    iana_id: Optional[int] = None
    creation_date: Optional[datetime] = None
    creation_date_is_date_only: bool = False
    fetched_at: Optional[datetime] = None


@dataclass(frozen=True)
class RegistrarIdentity:
    canonical_name: str
    iana_id: Optional[int]
    resolution: Resolution


UNRESOLVED_POOL = RegistrarIdentity("(unresolved)", None, Resolution.UNRESOLVED)

_DROP_TOKENS = {"llc", "inc", "ltd", "sa", "gmbh", "co"}
_PUNCT = str.maketrans({c: " " for c in ".,;:'\"()`"})


def normalize_registrar_name(raw: str) -> str:
    """Casefold, turn punctuation into spaces, collapse runs, drop
    corporate suffix tokens; folds the usual WHOIS spelling variants
    (with or without commas and trailing dots) together."""
    text = raw.casefold().translate(_PUNCT)
    tokens = [t for t in text.split() if t not in _DROP_TOKENS]
    return " ".join(tokens)


class RegistrarDirectory:
    def __init__(self, accredited: Dict[int, str], aliases: Dict[str, int]):
        for alias, iana in aliases.items():
            if iana not in accredited:
                raise ValueError(f"alias {alias!r} points at unknown IANA ID {iana}")
        self.accredited = dict(accredited)
        self.aliases = {normalize_registrar_name(a): i for a, i in aliases.items()}

    @classmethod
    def from_csv(cls, accredited_lines: Iterable[str],
                 alias_lines: Iterable[str] = ()) -> "RegistrarDirectory":
        accredited: Dict[int, str] = {}
        for row in csv.reader(_data_rows(accredited_lines, "iana_id")):
            accredited[int(row[0])] = row[1].strip()
        aliases: Dict[str, int] = {}
        for row in csv.reader(_data_rows(alias_lines, "alias")):
            aliases[row[0].strip()] = int(row[1])
        return cls(accredited, aliases)


def _data_rows(lines: Iterable[str], header_first_col: str):
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.lower().startswith(header_first_col + ","):
            continue
        yield stripped


def identify_registrar(record: RegistrationRecord,
                       directory: RegistrarDirectory) -> RegistrarIdentity:
    """Total function: every record maps to exactly one identity."""
    if record.iana_id is not None and record.iana_id in directory.accredited:
        return RegistrarIdentity(
            canonical_name=directory.accredited[record.iana_id],
            iana_id=record.iana_id, resolution=Resolution.BY_IANA_ID,
        )
    if record.raw_registrar_name:
        normalized = normalize_registrar_name(record.raw_registrar_name)
        iana = directory.aliases.get(normalized)
        if iana is not None:
            return RegistrarIdentity(
                canonical_name=directory.accredited[iana],
                iana_id=iana, resolution=Resolution.BY_NAME_MATCH,
            )
        return RegistrarIdentity(canonical_name=record.raw_registrar_name,
                                 iana_id=None, resolution=Resolution.UNRESOLVED)
    return UNRESOLVED_POOL


def estimate_registrar_sizes(
    records: Sequence[RegistrationRecord],
    directory: RegistrarDirectory,
) -> Dict[RegistrarIdentity, int]:
    """Distinct-domain counts per resolved registrar; unresolved records
    pool under one sentinel row. These are lower bounds: domains whose
    registration data never surfaced are simply not here."""
    domains_seen: Dict[RegistrarIdentity, set] = {}
    for record in records:
        identity = identify_registrar(record, directory)
        if identity.resolution is Resolution.UNRESOLVED:
            identity = UNRESOLVED_POOL
        domains_seen.setdefault(identity, set()).add(record.domain)
    return {identity: len(domains) for identity, domains in domains_seen.items()}


# ----------------------------------------------------------------------
# Fetching


@dataclass
class TldEndpoints:
    rdap_url: Optional[str] = None
    whois_host: Optional[str] = None
    whois_port: int = 43


class RegistrationClient:
    """Per-TLD transport: RDAP when the registry operates it, WHOIS
    otherwise, Unavailable when the TLD exposes neither. An optional
    per-endpoint rate limiter keeps bulk fetches polite."""

    def __init__(self, endpoints: Dict[str, TldEndpoints], timeout: float = 5.0,
                 session: Optional[requests.Session] = None,
                 whois_overrides: Optional[Dict[str, Dict[str, str]]] = None,
                 rate_limiter=None):
        self.endpoints = endpoints
        self.timeout = timeout
        self.session = session or requests.Session()
        # per-TLD regex overrides for nonstandard WHOIS field labels
        self.whois_overrides = whois_overrides or {}
        self.rate_limiter = rate_limiter

    def endpoints_for(self, domain: str) -> TldEndpoints:
        tld = domain.rstrip(".").rsplit(".", 1)[-1].lower()
        return self.endpoints.get(tld, TldEndpoints())

    def _throttle(self, endpoint_key: str) -> None:
        if self.rate_limiter is not None:
            self.rate_limiter.acquire(endpoint_key)

    def fetch_rdap(self, domain: str, base_url: str) -> dict:
        url = base_url.rstrip("/") + "/domain/" + domain.rstrip(".")
        self._throttle(base_url)
        try:
            response = self.session.get(url, timeout=self.timeout)
        except requests.Timeout as exc:
            raise FetchTimeout(str(exc)) from exc
        if response.status_code == 429:
            raise RateLimited(url)
        response.raise_for_status()
        return response.json()

    def fetch_whois(self, domain: str, host: str, port: int = 43) -> str:
        self._throttle(f"{host}:{port}")
        try:
            with socket.create_connection((host, port), timeout=self.timeout) as sock:
                sock.settimeout(self.timeout)
                sock.sendall(domain.rstrip(".").encode("ascii") + b"\r\n")
                chunks = []
                while True:
                    chunk = sock.recv(4096)
                    if not chunk:
                        break
                    chunks.append(chunk)
        except socket.timeout as exc:
            raise FetchTimeout(str(exc)) from exc
        text = b"".join(chunks).decode("utf-8", errors="replace")
        if re.search(r"rate limit|quota exceeded|too many requests", text, re.I):
            raise RateLimited(host)
        return text


def fetch_registration(domain, client: RegistrationClient,
                       now: Optional[datetime] = None) -> RegistrationRecord:
    """RDAP first, WHOIS fallback, Unavailable when neither exists.
    Timeouts and rate limits raise (retryable) instead of degrading to
    Unavailable."""
    name = domain.name if isinstance(domain, RegisteredDomain) else str(domain)
    name = name.rstrip(".")
    endpoints = client.endpoints_for(name)
    fetched_at = now or datetime.utcnow()
    if endpoints.rdap_url:
        try:
            payload = client.fetch_rdap(name, endpoints.rdap_url)
        except (RateLimited, FetchTimeout):
            raise
        except (requests.RequestException, ValueError):
            payload = None
        if payload is not None:
            record = parse_rdap(name, payload)
            record.fetched_at = fetched_at
            return record
    if endpoints.whois_host:
        text = client.fetch_whois(name, endpoints.whois_host, endpoints.whois_port)
        record = parse_whois(name, text,
                             overrides=client.whois_overrides.get(
                                 name.rsplit(".", 1)[-1].lower()))
        record.fetched_at = fetched_at
        return record
    return RegistrationRecord(domain=name, source=Source.UNAVAILABLE,
                              fetched_at=fetched_at)


def parse_rdap(domain: str, payload: dict) -> RegistrationRecord:
    raw_name = None
    iana_id = None
    for entity in payload.get("entities", ()):
        roles = [r.lower() for r in entity.get("roles", ())]
        if "registrar" not in roles:
            continue
        vcard = entity.get("vcardArray")
        if isinstance(vcard, list) and len(vcard) == 2:
            for item in vcard[1]:
                if isinstance(item, list) and len(item) >= 4 and item[0] == "fn":
                    raw_name = item[3]
        for public_id in entity.get("publicIds", ()):
            if "iana" in public_id.get("type", "").lower():
                try:
                    iana_id = int(public_id.get("identifier"))
                except (TypeError, ValueError):
                    pass
    creation = None
    date_only = False
    for event in payload.get("events", ()):
        if event.get("eventAction") == "registration":
            creation, date_only = parse_creation_date(str(event.get("eventDate", "")))
    return RegistrationRecord(
        domain=domain, source=Source.RDAP, raw_registrar_name=raw_name,
        iana_id=iana_id, creation_date=creation,
        creation_date_is_date_only=date_only,
    )


_DEFAULT_WHOIS_PATTERNS = {
    "registrar": r"^\s*Registrar:\s*(?P<v>.+?)\s*$",
    "iana_id": r"^\s*Registrar IANA ID:\s*(?P<v>\d+)\s*$",
    "creation": r"^\s*(?:Creation Date|created|Registered on|Registration Time|Domain Registration Date):\s*(?P<v>.+?)\s*$",
}

_DATE_FORMATS = (
    "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S.%f",
    "%Y.%m.%d %H:%M:%S", "%d.%m.%Y %H:%M:%S", "%Y/%m/%d %H:%M:%S",
    "%a %b %d %H:%M:%S %Z %Y",
)
_DATE_ONLY_FORMATS = (
    "%Y-%m-%d", "%d-%b-%Y", "%d.%m.%Y", "%Y.%m.%d", "%Y/%m/%d",
    "%d/%m/%Y", "%b %d %Y",
)


def parse_creation_date(text: str) -> Tuple[Optional[datetime], bool]:
    """Creation timestamp plus a flag marking date-only precision.
    Unparsable dates come back as None: better no age signal than a
    wrong one."""
    text = text.strip().rstrip(".")
    if not text:
        return None, False
    for fmt in _DATE_ONLY_FORMATS:  # before ISO: "2021-06-01" is date-only
        try:
            return datetime.strptime(text, fmt), True
        except ValueError:
            continue
    try:
        return parse_timestamp(text), False
    except ValueError:
        pass
    base = text[:-1] + "+00:00" if text.endswith("Z") else text
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(base, fmt), False
        except ValueError:
            continue
    return None, False


def parse_whois(domain: str, text: str,
                overrides: Optional[Dict[str, str]] = None) -> RegistrationRecord:
    """Regex field extraction over port-43 output; per-TLD overrides
    supply alternate field labels where registries deviate."""
    patterns = dict(_DEFAULT_WHOIS_PATTERNS)
    if overrides:
        patterns.update(overrides)
    found: Dict[str, str] = {}
    for key, pattern in patterns.items():
        match = re.search(pattern, text, re.MULTILINE | re.IGNORECASE)
        if match:
            found[key] = match.group("v")
    creation, date_only = parse_creation_date(found.get("creation", ""))
    iana = None
    if "iana_id" in found:
        try:
            iana = int(found["iana_id"])
        except ValueError:
            pass
    return RegistrationRecord(
        domain=domain, source=Source.WHOIS,
        raw_registrar_name=found.get("registrar"),
        iana_id=iana, creation_date=creation,
        creation_date_is_date_only=date_only,
    )


def load_endpoint_map(lines: Iterable[str]) -> Dict[str, TldEndpoints]:
    """CSV ``tld,rdap_url,whois_host[,whois_port]`` (blank fields allowed)."""
    out: Dict[str, TldEndpoints] = {}
    for row in csv.reader(_data_rows(lines, "tld")):
        tld = row[0].strip().lower()
        rdap = row[1].strip() or None if len(row) > 1 else None
        whois_host = row[2].strip() or None if len(row) > 2 else None
        port = int(row[3]) if len(row) > 3 and row[3].strip() else 43
        out[tld] = TldEndpoints(rdap_url=rdap, whois_host=whois_host,
                                whois_port=port)
    return out
