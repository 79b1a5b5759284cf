"""Uptime tracking: the 12-snapshot schedule, takedown detection, and
Kaplan-Meier survival estimation with right-censoring.

A blacklisted URL is observed at blacklisting time, then 5m/30m/1h/6h/
12h/24h/48h after it, then weekly to four weeks. Uptime granularity is
the snapshot offset: the platform cannot see between observations, so it
never interpolates. The KM estimator computes survival probabilities in
exact rational arithmetic and only converts to float at the edges.
"""

from __future__ import annotations

import hashlib
import time as _time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import dnswire
from .resolver import DnsTimeout, StubResolver

SNAPSHOT_OFFSETS: Tuple[timedelta, ...] = (
    timedelta(0),
    timedelta(minutes=5),
    timedelta(minutes=30),
    timedelta(hours=1),
    timedelta(hours=6),
    timedelta(hours=12),
    timedelta(hours=24),
    timedelta(hours=48),
    timedelta(weeks=1),
    timedelta(weeks=2),
    timedelta(weeks=3),
    timedelta(weeks=4),
)

CENSOR_HORIZON = SNAPSHOT_OFFSETS[-1]


def schedule(blacklisted_at: datetime) -> List[datetime]:
    """The 12 target timestamps for one URL."""
    return [blacklisted_at + offset for offset in SNAPSHOT_OFFSETS]


class DnsStateKind(Enum):
    RESOLVED = "resolved"
    NXDOMAIN = "nxdomain"
    SERVFAIL = "servfail"
    TIMEOUT = "timeout"


@dataclass
class DnsState:
    kind: DnsStateKind
    a_records: Tuple[str, ...] = ()


@dataclass
class HttpState:
    status_code: Optional[int] = None
    content_digest: Optional[str] = None
    conn_error: bool = False


@dataclass
class Snapshot:
    url: str
    taken_at: datetime
    scheduled_offset: timedelta
    dns_state: DnsState
    http_state: HttpState
    whois_digest: Optional[str] = None


@dataclass
class SnapshotSeries:
    url: str
    blacklisted_at: datetime
    snapshots: List[Snapshot] = field(default_factory=list)

    def ordered(self) -> List[Snapshot]:
        return sorted(self.snapshots, key=lambda s: s.scheduled_offset)


# ----------------------------------------------------------------------
# Clocks and probes


class RealClock:
    def now(self) -> datetime:
        return datetime.utcnow()

    def sleep_until(self, target: datetime) -> None:
        delta = (target - self.now()).total_seconds()
        if delta > 0:
            _time.sleep(delta)


class VirtualClock:
    """Jumps straight to each deadline: a 4-week schedule runs in
    milliseconds under tests."""

    def __init__(self, start: datetime):
        self._now = start

    def now(self) -> datetime:
        return self._now

    def sleep_until(self, target: datetime) -> None:
        if target > self._now:
            self._now = target


class DnsProbe:
    """A-record probe with one in-snapshot retry: a single NXDOMAIN or
    SERVFAIL blip must not count as a takedown."""

    def __init__(self, resolver: StubResolver):
        self.resolver = resolver

    def __call__(self, host: str) -> DnsState:
        first = self._one(host)
        if first.kind is DnsStateKind.RESOLVED:
            return first
        second = self._one(host)
        return second if second.kind is DnsStateKind.RESOLVED else first

    def _one(self, host: str) -> DnsState:
        try:
            reply = self.resolver.query(host, dnswire.A)
        except DnsTimeout:
            return DnsState(DnsStateKind.TIMEOUT)
        if reply.rcode == dnswire.NXDOMAIN:
            return DnsState(DnsStateKind.NXDOMAIN)
        if reply.rcode != dnswire.NOERROR:
            return DnsState(DnsStateKind.SERVFAIL)
        addrs = tuple(sorted(r.address() for r in reply.answers
                             if r.rtype == dnswire.A))
        return DnsState(DnsStateKind.RESOLVED, a_records=addrs)


class HttpProbe:
    def __init__(self, timeout: float = 5.0, url_rewrite: Optional[Callable[[str], str]] = None):
        self.timeout = timeout
        self.url_rewrite = url_rewrite  # fixture mode points URLs at the harness

    def __call__(self, url: str) -> HttpState:
        import requests

        target = self.url_rewrite(url) if self.url_rewrite else url
        try:
            response = requests.get(target, timeout=self.timeout,
                                    allow_redirects=False)
        except requests.RequestException:
            return HttpState(conn_error=True)
        digest = hashlib.sha256(response.content).hexdigest()
        return HttpState(status_code=response.status_code, content_digest=digest)


class RegistrationDigestProbe:
    """Snapshot facet for the registration record: a stable digest of
    the registrar identity fields, so takedown analysis can notice a
    registrar/status change without storing the whole record. Fetch
    failures record as None, never as an exception."""

    def __init__(self, client):
        self.client = client

    def __call__(self, domain: str) -> Optional[str]:
        from .registration import fetch_registration

        try:
            record = fetch_registration(domain, self.client)
        except Exception:
            return None
        material = f"{record.source.value}|{record.raw_registrar_name}|{record.iana_id}"
        return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass
class Probes:
    dns: Callable[[str], DnsState]
    http: Callable[[str], HttpState]
    whois: Optional[Callable[[str], Optional[str]]] = None


def host_of_url(url: str) -> str:
    from urllib.parse import urlsplit

    if "://" not in url:
        return url.split("/", 1)[0]
    return urlsplit(url).hostname or url


def take_snapshot(url: str, probes: Probes, clock, offset: timedelta) -> Snapshot:
    """One observation; every facet fails independently and failures are
    recorded states, never exceptions."""
    host = host_of_url(url)
    dns_state = probes.dns(host)
    http_state = probes.http(url)
    whois_digest = probes.whois(host) if probes.whois else None
    return Snapshot(url=url, taken_at=clock.now(), scheduled_offset=offset,
                    dns_state=dns_state, http_state=http_state,
                    whois_digest=whois_digest)


DOWN_HTTP_STATUSES = frozenset({404, 410})


def snapshot_is_down(snapshot: Snapshot,
                     suspension_signatures: frozenset = frozenset()) -> bool:
    """Down = the DNS name is gone, or the content answers as removed,
    or the page matches a known suspension-page digest."""
    if snapshot.dns_state.kind in (DnsStateKind.NXDOMAIN, DnsStateKind.SERVFAIL):
        return True
    if snapshot.dns_state.kind is DnsStateKind.RESOLVED:
        http = snapshot.http_state
        if http.conn_error or (http.status_code in DOWN_HTTP_STATUSES):
            return True
        if http.content_digest and http.content_digest in suspension_signatures:
            return True
    return False


def detect_takedown(series: SnapshotSeries,
                    suspension_signatures: frozenset = frozenset()
                    ) -> Tuple[timedelta, bool]:
    """(uptime, censored): uptime is the offset of the first snapshot
    classified down; a series never seen down is right-censored at its
    last observation (the 4-week horizon for complete series)."""
    snapshots = series.ordered()
    if not snapshots:
        raise ValueError("series has no snapshots")
    for snap in snapshots:
        if snapshot_is_down(snap, suspension_signatures):
            return snap.scheduled_offset, False
    return snapshots[-1].scheduled_offset, True


# ----------------------------------------------------------------------
# Scheduler


def run_tracker(blacklistings: Sequence[Tuple[str, datetime]], probes: Probes,
                clock, sink: Callable[[Snapshot], None]) -> List[SnapshotSeries]:
    """Dispatch all due snapshots in time order; snapshots of one URL
    stay strictly ordered. The sink sees every snapshot as it is taken
    (append-only persistence hooks in here)."""
    tasks = []
    for url, listed_at in blacklistings:
        for index, due in enumerate(schedule(listed_at)):
            tasks.append((due, url, SNAPSHOT_OFFSETS[index]))
    tasks.sort(key=lambda t: (t[0], t[1], t[2]))
    series: Dict[str, SnapshotSeries] = {
        url: SnapshotSeries(url=url, blacklisted_at=listed_at)
        for url, listed_at in blacklistings
    }
    for due, url, offset in tasks:
        clock.sleep_until(due)
        snap = take_snapshot(url, probes, clock, offset)
        series[url].snapshots.append(snap)
        sink(snap)
    return [series[url] for url, _ in blacklistings]


# ----------------------------------------------------------------------
# Survival analysis


@dataclass
class SurvivalCurve:
    steps: List[Tuple[float, float]]
    n_subjects: int
    n_censored: int

    def probability_at(self, t: float) -> float:
        prob = 1.0
        for step_t, step_p in self.steps:
            if step_t <= t:
                prob = step_p
            else:
                break
        return prob


def km_survival(durations: Sequence[float],
                observed: Sequence[bool]) -> SurvivalCurve:
    """Product-limit estimator over (duration, event-observed) pairs.

    Internally exact: survival at each event time is a Fraction, so with
    no censoring the output equals the empirical survival function to
    the last bit. Subjects censored at an event time count as at risk
    for that event (censoring is processed after deaths).
    """
    if len(durations) != len(observed):
        raise ValueError("durations and observed flags differ in length")
    if not durations:
        raise ValueError("no subjects")
    deaths: Dict[float, int] = {}
    leaving: Dict[float, int] = {}
    for duration, was_observed in zip(durations, observed):
        t = float(duration)
        leaving[t] = leaving.get(t, 0) + 1
        if was_observed:
            deaths[t] = deaths.get(t, 0) + 1
    at_risk = len(durations)
    prob = Fraction(1)
    steps: List[Tuple[float, float]] = []
    if not deaths or min(deaths) > 0.0:
        steps.append((0.0, 1.0))
    for t in sorted(leaving):
        d = deaths.get(t, 0)
        if d:
            prob *= Fraction(at_risk - d, at_risk)
            steps.append((t, float(prob)))
        at_risk -= leaving[t]
    return SurvivalCurve(steps=steps, n_subjects=len(durations),
                         n_censored=len(durations) - sum(observed))


def survival(series_list: Sequence[SnapshotSeries],
             suspension_signatures: frozenset = frozenset()) -> SurvivalCurve:
    if not series_list:
        raise ValueError("no series to analyze")
    durations: List[float] = []
    observed: List[bool] = []
    for series in series_list:
        uptime, censored = detect_takedown(series, suspension_signatures)
        durations.append(uptime.total_seconds())
        observed.append(not censored)
    return km_survival(durations, observed)


@dataclass
class UptimeSummary:
    n: int
    n_censored: int
    mean: timedelta              # censored series enter at the 4-week floor
    mean_observed_only: Optional[timedelta]
    median: timedelta


def summarize(outcomes: Sequence[Tuple[timedelta, bool]]) -> UptimeSummary:
    """Mean and median uptime over (uptime, censored) pairs. Censored
    series contribute a 4-week floor to the mean and are counted; the
    observed-only mean is carried alongside so reports can label which
    treatment they show. Median is the lower-middle element."""
    if not outcomes:
        raise ValueError("no uptimes to summarize")
    values = [max(u, CENSOR_HORIZON) if censored else u
              for u, censored in outcomes]
    observed = [u for u, censored in outcomes if not censored]
    total = sum(values, timedelta(0))
    mean = total / len(values)
    mean_observed = (sum(observed, timedelta(0)) / len(observed)
                     if observed else None)
    ordered = sorted(values)
    median = ordered[(len(ordered) - 1) // 2]
    return UptimeSummary(
        n=len(values), n_censored=sum(1 for _, c in outcomes if c),
        mean=mean, mean_observed_only=mean_observed, median=median,
    )


def offset_histogram(outcomes: Sequence[Tuple[timedelta, bool]]) -> List[Tuple[str, int]]:
    """Counts per schedule offset, shaped like the per-provider uptime
    histograms (censored series land on the final bucket)."""
    labels = ["start", "5min", "30min", "1h", "6h", "12h", "1d", "2d",
              "1w", "2w", "3w", "4w"]
    counts = {label: 0 for label in labels}
    for uptime, _censored in outcomes:
        nearest = min(range(len(SNAPSHOT_OFFSETS)),
                      key=lambda i: abs((SNAPSHOT_OFFSETS[i] - uptime).total_seconds()))
        counts[labels[nearest]] += 1
    return [(label, counts[label]) for label in labels]
