"""Blacklist feed ingestion and per-feed summary statistics.

The canonical on-disk feed format is CSV with a header row:
``raw_entry,abuse_type,first_seen[,target_brand]``. Adapters for real
feeds are thin front-ends that emit this format; keeping the toolkit
side neutral makes runs reproducible without proprietary data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .domains import (
    DomainError,
    Fqdn,
    NotADomain,
    NotARegistrableDomain,
    RegisteredDomain,
    SuffixRuleSet,
    extract_fqdn,
)


class AbuseType(Enum):
    SPAM = "spam"
    PHISHING = "phishing"
    MALWARE = "malware"
    BOTNET_CC = "botnet_cc"


class EntryType(Enum):
    URL = "url"
    FQDN_OR_IP = "fqdn_or_ip"
    DOMAIN = "domain"


@dataclass(frozen=True)
class FeedDescriptor:
    feed_id: str
    entry_type: EntryType
    abuse_types: frozenset
    collection_period: Tuple[datetime, datetime]
    compromised_hint: Optional[bool] = None
    group: Optional[str] = None

    def __post_init__(self):
        start, end = self.collection_period
        if start >= end:
            raise ValueError("collection period start must precede end")


@dataclass
class AbuseEvent:
    feed_id: str
    raw_entry: str
    entry_kind: str  # url | fqdn | ip | domain
    abuse_type: AbuseType
    first_seen: datetime
    registered_domain: Optional[RegisteredDomain] = None
    fqdn: Optional[Fqdn] = None
    target_brand: Optional[str] = None


@dataclass
class IngestReport:
    events: List[AbuseEvent] = field(default_factory=list)
    errors: List[Tuple[int, str]] = field(default_factory=list)


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 timestamp, normalized to naive UTC."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    return stamp


def _looks_like_ip(text: str) -> bool:
    import ipaddress

    try:
        ipaddress.ip_address(text.strip("[]"))
        return True
    except ValueError:
        return False


def ingest(feed: FeedDescriptor, lines: Iterable[str],
           rules: SuffixRuleSet) -> IngestReport:
    """Parse one feed batch. Malformed lines are tallied, never fatal;
    IP-only entries become events without a registered domain. No
    deduplication happens here (duplicates collapse downstream)."""
    report = IngestReport()
    reader = csv.reader(lines)
    header: Optional[List[str]] = None
    start, end = feed.collection_period
    for lineno, row in enumerate(reader, start=1):
        if not row:
            continue
        if header is None:
            header = [h.strip().lower() for h in row]
            if header[:3] != ["raw_entry", "abuse_type", "first_seen"]:
                report.errors.append((lineno, "missing or bad header row"))
                return report
            continue
        if len(row) < 3:
            report.errors.append((lineno, "too few columns"))
            continue
        raw_entry = row[0].strip()
        if not raw_entry:
            report.errors.append((lineno, "empty entry"))
            continue
        try:
            abuse_type = AbuseType(row[1].strip().lower())
        except ValueError:
            report.errors.append((lineno, f"unknown abuse type {row[1]!r}"))
            continue
        if abuse_type not in feed.abuse_types:
            report.errors.append(
                (lineno, f"abuse type {abuse_type.value} not declared for feed"))
            continue
        try:
            first_seen = parse_timestamp(row[2])
        except ValueError:
            report.errors.append((lineno, f"bad timestamp {row[2]!r}"))
            continue
        if not (start <= first_seen < end):
            report.errors.append((lineno, "first_seen outside collection period"))
            continue
        brand = row[3].strip() or None if len(row) > 3 else None

        host = raw_entry
        if "://" in raw_entry:
            kind = "url"
        elif _looks_like_ip(raw_entry):
            kind = "ip"
        elif feed.entry_type is EntryType.DOMAIN:
            kind = "domain"
        else:
            kind = "fqdn"

        registered = fqdn = None
        if kind != "ip":
            try:
                fqdn = extract_fqdn(host, rules)
                registered = fqdn.registered
            except (NotADomain, NotARegistrableDomain):
                pass  # event kept; no registrable unit behind it
            except DomainError as exc:
                report.errors.append((lineno, str(exc)))
                continue
        report.events.append(AbuseEvent(
            feed_id=feed.feed_id, raw_entry=raw_entry, entry_kind=kind,
            abuse_type=abuse_type, first_seen=first_seen,
            registered_domain=registered, fqdn=fqdn, target_brand=brand,
        ))
    if header is None:
        report.errors.append((0, "empty input (no header row)"))
    return report


def dedupe_events(events: Sequence[AbuseEvent]) -> List[AbuseEvent]:
    """Collapse duplicates on (domain-or-raw-entry, abuse type, feed);
    the earliest first_seen wins. Input order is preserved otherwise."""
    chosen: Dict[tuple, AbuseEvent] = {}
    order: List[tuple] = []
    for event in events:
        domain_key = (event.registered_domain.name
                      if event.registered_domain else event.raw_entry)
        key = (domain_key, event.abuse_type, event.feed_id)
        existing = chosen.get(key)
        if existing is None:
            chosen[key] = event
            order.append(key)
        elif event.first_seen < existing.first_seen:
            chosen[key] = event
    return [chosen[k] for k in order]


def window(events: Sequence[AbuseEvent],
           period: Tuple[datetime, datetime]) -> List[AbuseEvent]:
    """Events with first_seen in the half-open interval [start, end)."""
    start, end = period
    if start >= end:
        raise ValueError("window start must precede end")
    return [e for e in events if start <= e.first_seen < end]


@dataclass
class FeedSummary:
    feed_id: str
    is_group: bool
    total_entries: int
    entries_with_domains: int
    pct_with_domains: float
    unique_domains: int


def _summary_row(feed_id: str, is_group: bool,
                 events: Sequence[AbuseEvent]) -> FeedSummary:
    # entries are unique blacklisted resources, so duplicates (within a
    # feed, or across a group's sub-feeds) collapse here
    entries = {e.raw_entry for e in events}
    with_domains = {e.raw_entry for e in events if e.registered_domain is not None}
    unique = {e.registered_domain.name for e in events if e.registered_domain}
    total = len(entries)
    pct = round(100.0 * len(with_domains) / total, 2) if total else 0.0
    return FeedSummary(
        feed_id=feed_id, is_group=is_group, total_entries=total,
        entries_with_domains=len(with_domains), pct_with_domains=pct,
        unique_domains=len(unique),
    )


def summarize(events: Sequence[AbuseEvent],
              feeds: Sequence[FeedDescriptor]) -> List[FeedSummary]:
    """Per-feed rows plus one union row per feed group. Group unique
    counts can be lower than the sum of member counts because the same
    domain may sit on several sub-feeds."""
    by_feed: Dict[str, List[AbuseEvent]] = {f.feed_id: [] for f in feeds}
    for event in events:
        by_feed.setdefault(event.feed_id, []).append(event)
    groups: Dict[str, List[str]] = {}
    for feed in feeds:
        if feed.group:
            groups.setdefault(feed.group, []).append(feed.feed_id)
    rows: List[FeedSummary] = []
    grouped_ids = set()
    for group in sorted(groups):
        members = sorted(groups[group])
        grouped_ids.update(members)
        union_events = [e for m in members for e in by_feed.get(m, [])]
        rows.append(_summary_row(group, True, union_events))
        rows.extend(_summary_row(m, False, by_feed.get(m, [])) for m in members)
    for feed in sorted(f.feed_id for f in feeds if f.feed_id not in grouped_ids):
        rows.append(_summary_row(feed, False, by_feed.get(feed, [])))
    return rows
