"""Line-delimited JSON persistence for pipeline artifacts.

Every store file is append-only, one record per line; crash recovery is
replay. Codecs here are deliberately explicit (no pickling, no reflection)
so stored runs survive refactors.
"""

from __future__ import annotations

import json
import os
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, List, Optional

from .classify import ClassificationVerdict, ExclusionReason, Label, Rule
from .domains import Fqdn, RegisteredDomain, TldGroup
from .feeds import AbuseEvent, AbuseType, parse_timestamp
from .registration import RegistrationRecord, Source
from .uptime import (
    DnsState,
    DnsStateKind,
    HttpState,
    Snapshot,
    SnapshotSeries,
)


def append_jsonl(path, records: Iterable[dict]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
            count += 1
        fh.flush()
        os.fsync(fh.fileno())
    return count


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _dt(stamp: datetime) -> str:
    return stamp.isoformat()


# -- abuse events ------------------------------------------------------


def event_to_dict(event: AbuseEvent) -> dict:
    out = {
        "feed_id": event.feed_id,
        "raw_entry": event.raw_entry,
        "entry_kind": event.entry_kind,
        "abuse_type": event.abuse_type.value,
        "first_seen": _dt(event.first_seen),
    }
    if event.registered_domain:
        rd = event.registered_domain
        out["registered_domain"] = {
            "name": rd.name, "public_suffix": rd.public_suffix, "tld": rd.tld,
            "tld_group": rd.tld_group.value if rd.tld_group else None,
        }
    if event.fqdn:
        out["fqdn"] = event.fqdn.name
    if event.target_brand:
        out["target_brand"] = event.target_brand
    return out


def event_from_dict(data: dict) -> AbuseEvent:
    registered = None
    if "registered_domain" in data:
        rd = data["registered_domain"]
        registered = RegisteredDomain(
            name=rd["name"], public_suffix=rd["public_suffix"], tld=rd["tld"],
            tld_group=TldGroup(rd["tld_group"]) if rd.get("tld_group") else None,
        )
    fqdn = None
    if data.get("fqdn") and registered is not None:
        fqdn = Fqdn(name=data["fqdn"], registered=registered)
    return AbuseEvent(
        feed_id=data["feed_id"], raw_entry=data["raw_entry"],
        entry_kind=data["entry_kind"], abuse_type=AbuseType(data["abuse_type"]),
        first_seen=parse_timestamp(data["first_seen"]),
        registered_domain=registered, fqdn=fqdn,
        target_brand=data.get("target_brand"),
    )


# -- registration records ----------------------------------------------


def registration_to_dict(record: RegistrationRecord) -> dict:
    return {
        "domain": record.domain,
        "source": record.source.value,
        "raw_registrar_name": record.raw_registrar_name,
        "iana_id": record.iana_id,
        "creation_date": _dt(record.creation_date) if record.creation_date else None,
        "creation_date_is_date_only": record.creation_date_is_date_only,
        "fetched_at": _dt(record.fetched_at) if record.fetched_at else None,
    }


def registration_from_dict(data: dict) -> RegistrationRecord:
    return RegistrationRecord(
        domain=data["domain"], source=Source(data["source"]),
        raw_registrar_name=data.get("raw_registrar_name"),
        iana_id=data.get("iana_id"),
        creation_date=(parse_timestamp(data["creation_date"])
                       if data.get("creation_date") else None),
        creation_date_is_date_only=data.get("creation_date_is_date_only", False),
        fetched_at=(parse_timestamp(data["fetched_at"])
                    if data.get("fetched_at") else None),
    )


# -- verdicts ------------------------------------------------------------


def verdict_to_dict(verdict: ClassificationVerdict) -> dict:
    return {
        "domain": verdict.domain,
        "label": verdict.label.value,
        "fired_rules": sorted(rule.value for rule in verdict.fired_rules),
        "exclusion_reason": (verdict.exclusion_reason.value
                             if verdict.exclusion_reason else None),
        "matched_brand": verdict.matched_brand,
        "abuse_type": verdict.abuse_type.value if verdict.abuse_type else None,
    }


def verdict_from_dict(data: dict) -> ClassificationVerdict:
    return ClassificationVerdict(
        domain=data["domain"], label=Label(data["label"]),
        fired_rules=frozenset(Rule(r) for r in data.get("fired_rules", ())),
        exclusion_reason=(ExclusionReason(data["exclusion_reason"])
                          if data.get("exclusion_reason") else None),
        matched_brand=data.get("matched_brand"),
        abuse_type=AbuseType(data["abuse_type"]) if data.get("abuse_type") else None,
    )


# -- snapshots -----------------------------------------------------------


def snapshot_to_dict(snap: Snapshot) -> dict:
    return {
        "url": snap.url,
        "taken_at": _dt(snap.taken_at),
        "offset_seconds": snap.scheduled_offset.total_seconds(),
        "dns": {"kind": snap.dns_state.kind.value,
                "a_records": list(snap.dns_state.a_records)},
        "http": {"status_code": snap.http_state.status_code,
                 "content_digest": snap.http_state.content_digest,
                 "conn_error": snap.http_state.conn_error},
        "whois_digest": snap.whois_digest,
    }


def snapshot_from_dict(data: dict) -> Snapshot:
    return Snapshot(
        url=data["url"], taken_at=parse_timestamp(data["taken_at"]),
        scheduled_offset=timedelta(seconds=data["offset_seconds"]),
        dns_state=DnsState(DnsStateKind(data["dns"]["kind"]),
                           tuple(data["dns"]["a_records"])),
        http_state=HttpState(status_code=data["http"]["status_code"],
                             content_digest=data["http"]["content_digest"],
                             conn_error=data["http"]["conn_error"]),
        whois_digest=data.get("whois_digest"),
    )


class SnapshotStore:
    """Append-only snapshot log; series rebuild by replay."""

    def __init__(self, path):
        self.path = Path(path)

    def append(self, snap: Snapshot) -> None:
        append_jsonl(self.path, [snapshot_to_dict(snap)])

    def load_series(self, blacklistings: Optional[dict] = None) -> List[SnapshotSeries]:
        if not self.path.exists():
            return []
        by_url: dict = {}
        for data in read_jsonl(self.path):
            snap = snapshot_from_dict(data)
            by_url.setdefault(snap.url, []).append(snap)
        out = []
        for url, snaps in by_url.items():
            listed_at = (blacklistings or {}).get(url)
            if listed_at is None:
                listed_at = min(s.taken_at - s.scheduled_offset for s in snaps)
            out.append(SnapshotSeries(url=url, blacklisted_at=listed_at,
                                      snapshots=sorted(snaps, key=lambda s: s.scheduled_offset)))
        out.sort(key=lambda s: s.url)
        return out
