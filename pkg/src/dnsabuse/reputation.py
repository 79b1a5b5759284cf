"""Occurrence and size-normalized abuse rates for TLDs, registrars,
hosting ASes, countries and free-service providers.

The single ranked metric is the occurrence of unique abused registered
domains; blacklisted-FQDN and URL counts appear only as informational
columns because campaign artifacts (one domain, thousands of URLs)
inflate them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .classify import ClassificationVerdict, Label
from .domains import suffix_match
from .feeds import AbuseEvent, AbuseType
from .nettables import PrefixTable
from .resolver import DnsTimeout, StubResolver
from . import dnswire

RATE_BASIS = 10_000

UNATTRIBUTED = "(unattributed)"


class SizeProvenance(Enum):
    ZONE_FILE = "zone_file"
    CENTR_DECLARED = "centr_declared"
    THIRD_PARTY_ESTIMATE = "third_party_estimate"
    ENUMERATED_LOWER_BOUND = "enumerated_lower_bound"


_PRECEDENCE = {
    SizeProvenance.ZONE_FILE: 0,
    SizeProvenance.CENTR_DECLARED: 1,
    SizeProvenance.THIRD_PARTY_ESTIMATE: 2,
    SizeProvenance.ENUMERATED_LOWER_BOUND: 3,
}


@dataclass
class SizeTable:
    entries: Dict[str, int] = field(default_factory=dict)
    provenance: Dict[str, SizeProvenance] = field(default_factory=dict)
    conflicts: List[str] = field(default_factory=list)

    def set(self, entity: str, size: int, provenance: SizeProvenance) -> None:
        if size < 0:
            raise ValueError("sizes are counts; negative makes no sense")
        current = self.provenance.get(entity)
        if current is None or _PRECEDENCE[provenance] < _PRECEDENCE[current]:
            if current is not None and self.entries[entity] != size:
                self.conflicts.append(
                    f"{entity}: {current.value}={self.entries[entity]} "
                    f"superseded by {provenance.value}={size}")
            self.entries[entity] = size
            self.provenance[entity] = provenance
        elif current is not None and self.entries[entity] != size:
            self.conflicts.append(
                f"{entity}: kept {current.value}={self.entries[entity]}, "
                f"ignored {provenance.value}={size}")

    def get(self, entity: str) -> Optional[int]:
        return self.entries.get(entity)

    @classmethod
    def from_csv(cls, lines: Iterable[str]) -> "SizeTable":
        table = cls()
        for row in csv.reader(lines):
            if not row or row[0].startswith("#") or row[0].strip().lower() == "entity":
                continue
            table.set(row[0].strip(), int(row[1]), SizeProvenance(row[2].strip()))
        return table


class UndefinedRateError(ValueError):
    """Zero or unknown size: the rate has no meaning."""


def rate(occurrence: int, size: int) -> float:
    """Abused domains per 10,000 registrations; exact, unrounded."""
    if size <= 0:
        raise UndefinedRateError("size must be positive")
    return occurrence / size * RATE_BASIS


@dataclass
class ReputationRow:
    entity_key: str
    abuse_type: Optional[AbuseType]
    occurrence: int
    size: Optional[int] = None
    rate: Optional[float] = None
    # informational only: campaign artifacts inflate these, so nothing
    # ranks on them
    fqdn_count: Optional[int] = None
    url_count: Optional[int] = None


def occurrence(items: Iterable, key: Callable[[object], Optional[str]],
               domain_of: Callable[[object], Optional[str]],
               abuse_type_of: Optional[Callable] = None) -> Dict[tuple, int]:
    """Generic unique-domain counter.

    Returns {(entity_key, abuse_type): count}. Items without a
    resolvable entity land under the UNATTRIBUTED key so totals still
    reconcile. Items whose entity resolves to a set are counted once per
    member (multi-homed hosting).
    """
    seen: Dict[tuple, Set[str]] = {}
    for item in items:
        domain = domain_of(item)
        if domain is None:
            continue
        abuse = abuse_type_of(item) if abuse_type_of else None
        entity = key(item)
        entities: Iterable[Optional[str]]
        if isinstance(entity, (set, frozenset, list, tuple)):
            entities = entity or [None]
        else:
            entities = [entity]
        for ent in entities:
            bucket = UNATTRIBUTED if ent is None else str(ent)
            seen.setdefault((bucket, abuse), set()).add(domain)
    return {k: len(v) for k, v in seen.items()}


def occurrence_by_tld(events: Sequence[AbuseEvent]) -> Dict[tuple, int]:
    return occurrence(
        events,
        key=lambda e: e.registered_domain.tld if e.registered_domain else None,
        domain_of=lambda e: e.registered_domain.name if e.registered_domain else e.raw_entry,
        abuse_type_of=lambda e: e.abuse_type,
    )


def informational_counts_by_tld(events: Sequence[AbuseEvent]) -> Dict[tuple, dict]:
    """Unique blacklisted FQDNs and raw URLs per (tld, abuse type).
    Informational columns only: one campaign can mint thousands of
    subdomains or URLs for a single registered domain."""
    fqdns: Dict[tuple, Set[str]] = {}
    urls: Dict[tuple, Set[str]] = {}
    for event in events:
        if event.registered_domain is None:
            continue
        key = (event.registered_domain.tld, event.abuse_type)
        if event.fqdn is not None:
            fqdns.setdefault(key, set()).add(event.fqdn.name)
        if event.entry_kind == "url":
            urls.setdefault(key, set()).add(event.raw_entry)
    keys = set(fqdns) | set(urls)
    return {key: {"fqdn_count": len(fqdns.get(key, ())),
                  "url_count": len(urls.get(key, ()))} for key in keys}


def occurrence_by_registrar(
    verdicts: Sequence[ClassificationVerdict],
    registrar_of: Dict[str, str],
) -> Dict[tuple, int]:
    """Registrar metrics count maliciously registered domains only;
    compromised sites are hosting-level incidents registrars cannot
    prevent. ``registrar_of`` maps domain -> registrar key."""
    malicious = [v for v in verdicts if v.label is Label.MALICIOUSLY_REGISTERED]
    return occurrence(
        malicious,
        key=lambda v: registrar_of.get(v.domain),
        domain_of=lambda v: v.domain,
        abuse_type_of=lambda v: v.abuse_type,
    )


@dataclass
class HostingAttribution:
    domain: str
    a_records: FrozenSet[str] = frozenset()
    as_set: FrozenSet[int] = frozenset()
    country_codes: FrozenSet[str] = frozenset()
    fqdn_as_set: FrozenSet[int] = frozenset()
    resolution_failed: bool = False


def attribute_hosting(domain: str, fqdn: Optional[str],
                      resolver: StubResolver, ip2asn: PrefixTable,
                      ip2country: PrefixTable) -> HostingAttribution:
    """A-record ASes and countries for the registered domain, plus the
    FQDN's AS set so domain-vs-FQDN hosting agreement can be measured."""

    def ases_of(name: str) -> Tuple[FrozenSet[str], FrozenSet[int], FrozenSet[str], bool]:
        try:
            reply = resolver.query(name, dnswire.A)
        except DnsTimeout:
            return frozenset(), frozenset(), frozenset(), True
        if reply.rcode != dnswire.NOERROR:
            return frozenset(), frozenset(), frozenset(), True
        addrs = frozenset(r.address() for r in reply.answers if r.rtype == dnswire.A)
        ases = set()
        countries = set()
        for ip in addrs:
            hit = ip2asn.lookup(ip)
            if hit is not None:
                ases.add(hit[0])
            cc = ip2country.lookup(ip)
            if cc is not None:
                countries.add(cc)
        return addrs, frozenset(ases), frozenset(countries), not addrs

    addrs, ases, countries, failed = ases_of(domain)
    fqdn_ases: FrozenSet[int] = ases
    if fqdn and fqdn.rstrip(".").lower() != domain.rstrip(".").lower():
        _, fqdn_ases, _, _ = ases_of(fqdn)
    return HostingAttribution(
        domain=domain, a_records=addrs, as_set=ases,
        country_codes=countries, fqdn_as_set=fqdn_ases,
        resolution_failed=failed,
    )


def as_agreement_share(attributions: Sequence[HostingAttribution]) -> Optional[float]:
    """Share of domains whose FQDN and registered-domain AS sets agree."""
    usable = [a for a in attributions if a.as_set or a.fqdn_as_set]
    if not usable:
        return None
    same = sum(1 for a in usable if a.as_set == a.fqdn_as_set)
    return 100.0 * same / len(usable)


BUCKETS = (
    ("(0,10k]", 0, 10_000),
    ("(10k,100k]", 10_000, 100_000),
    ("(100k,1M]", 100_000, 1_000_000),
    ("(1M,inf)", 1_000_000, None),
)


def bucket_of(size: int) -> str:
    """Size-bucket label; intervals are open on the left, closed on the
    right, so a size of exactly 10,000 is still in the first bucket."""
    for label, low, high in BUCKETS:
        if size > low and (high is None or size <= high):
            return label
    raise ValueError(f"size {size} fits no bucket")


def bucket(entities: Iterable[str],
           sizes: SizeTable) -> Tuple[Dict[str, List[str]], List[str]]:
    """Partition entities by size bucket; unknown sizes are reported
    separately rather than guessed."""
    partition: Dict[str, List[str]] = {label: [] for label, _, _ in BUCKETS}
    unbucketed: List[str] = []
    for entity in entities:
        size = sizes.get(entity)
        if size is None or size <= 0:
            unbucketed.append(entity)
        else:
            partition[bucket_of(size)].append(entity)
    return partition, unbucketed


def build_rows(occurrences: Dict[tuple, int], sizes: SizeTable) -> List[ReputationRow]:
    """Join occurrence counts with sizes; rates stay absent when the
    size is unknown or zero."""
    rows = []
    for (entity, abuse), count in sorted(occurrences.items(),
                                         key=lambda kv: (-kv[1], kv[0][0])):
        size = sizes.get(entity)
        try:
            value = rate(count, size) if size is not None else None
        except UndefinedRateError:
            value = None
        rows.append(ReputationRow(entity_key=entity, abuse_type=abuse,
                                  occurrence=count, size=size, rate=value))
    return rows


def rank_special_providers(events: Sequence[AbuseEvent],
                           provider_list: FrozenSet[str]) -> List[dict]:
    """Unique blacklisted FQDNs (not registered domains) per provider
    per abuse type, ordered by count. Free services hand out subdomains,
    so the FQDN is the abused unit."""
    counts: Dict[tuple, Set[str]] = {}
    for event in events:
        if event.fqdn is None:
            continue
        provider = suffix_match(event.fqdn.name, provider_list)
        if provider is None:
            continue
        counts.setdefault((provider, event.abuse_type), set()).add(event.fqdn.name)
    return [
        {"provider": provider, "abuse_type": abuse.value, "fqdn_count": len(names)}
        for (provider, abuse), names in sorted(
            counts.items(), key=lambda kv: (kv[0][1].value, -len(kv[1]), kv[0][0]))
    ]


def format_rate(value: Optional[float], *, force_decimals: bool = False) -> str:
    """Report rendering: rates below 10 keep two decimals, larger ones
    print as integers (unless a table opts into full decimals)."""
    if value is None:
        return ""
    if force_decimals or value < 10:
        return f"{value:.2f}"
    return str(round(value))
