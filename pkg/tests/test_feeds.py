from datetime import datetime

import pytest
from hypothesis import given, strategies as st

from dnsabuse.domains import load_suffix_rules
from dnsabuse.feeds import (
    AbuseType,
    EntryType,
    FeedDescriptor,
    dedupe_events,
    ingest,
    summarize,
    window,
)

RULES = load_suffix_rules("com\nexample\ntest")

PERIOD = (datetime(2021, 4, 1), datetime(2021, 7, 1))


def feed(feed_id="urlfeed", entry_type=EntryType.URL, group=None,
         abuse_types=frozenset({AbuseType.MALWARE, AbuseType.PHISHING,
                                AbuseType.SPAM})):
    return FeedDescriptor(feed_id=feed_id, entry_type=entry_type,
                          abuse_types=abuse_types, collection_period=PERIOD,
                          group=group)


def lines(rows):
    return ["raw_entry,abuse_type,first_seen,target_brand"] + rows


def test_url_with_ip_keeps_event_without_domain():
    report = ingest(feed(), lines(["http://192.0.2.5/drop.exe,malware,2021-05-01T00:00:00,"]),
                    RULES)
    assert len(report.events) == 1
    assert report.events[0].registered_domain is None
    assert report.events[0].entry_kind == "url"
    assert not report.errors


def test_domain_line_maps_directly():
    report = ingest(
        feed(entry_type=EntryType.DOMAIN, abuse_types=frozenset({AbuseType.SPAM})),
        lines(["bad.example,spam,2021-05-02T10:00:00,"]), RULES)
    event = report.events[0]
    assert event.registered_domain.name == "bad.example"
    assert event.entry_kind == "domain"


def test_duplicates_kept_on_ingest_and_collapsed_downstream():
    report = ingest(feed(), lines([
        "http://dup.example.com/a,phishing,2021-05-01T00:00:00,",
        "http://dup.example.com/a,phishing,2021-05-02T00:00:00,",
    ]), RULES)
    assert len(report.events) == 2
    deduped = dedupe_events(report.events)
    assert len(deduped) == 1
    assert deduped[0].first_seen == datetime(2021, 5, 1)


def test_unknown_abuse_type_is_error_not_default():
    report = ingest(feed(), lines(["http://x.example.com/,ipr,2021-05-01T00:00:00,"]),
                    RULES)
    assert not report.events
    assert len(report.errors) == 1


def test_events_plus_errors_account_for_all_lines():
    rows = [
        "http://a.example.com/,phishing,2021-05-01T00:00:00,",
        "http://b.example.com/,wat,2021-05-01T00:00:00,",
        ",phishing,2021-05-01T00:00:00,",
        "http://c.example.com/,phishing,not-a-date,",
        "http://d.example.com/,phishing,2021-05-01T00:00:00,",
    ]
    report = ingest(feed(), lines(rows), RULES)
    assert len(report.events) + len(report.errors) == len(rows)


def test_first_seen_must_sit_in_collection_period():
    report = ingest(feed(), lines(["http://x.example.com/,spam,2020-01-01T00:00:00,"]),
                    RULES)
    assert not report.events and report.errors


def test_target_brand_carried():
    report = ingest(feed(), lines([
        "http://x.example.com/login,phishing,2021-05-01T00:00:00,Facebook Inc."]),
        RULES)
    assert report.events[0].target_brand == "Facebook Inc."


def test_window_boundaries_half_open():
    report = ingest(feed(), lines([
        "http://a.example.com/,spam,2021-05-01T00:00:00,",
        "http://b.example.com/,spam,2021-06-01T00:00:00,",
    ]), RULES)
    kept = window(report.events, (datetime(2021, 5, 1), datetime(2021, 6, 1)))
    assert [e.raw_entry for e in kept] == ["http://a.example.com/"]
    assert window([], (datetime(2021, 5, 1), datetime(2021, 6, 1))) == []
    with pytest.raises(ValueError):
        window(report.events, (datetime(2021, 6, 1), datetime(2021, 5, 1)))


def test_summary_arithmetic():
    rows = [f"http://site{i}.com/,malware,2021-05-01T00:00:00," for i in range(6)]
    rows += [f"http://192.0.2.{i}/,malware,2021-05-01T00:00:00," for i in range(4)]
    report = ingest(feed(feed_id="mw"), lines(rows), RULES)
    summary = summarize(report.events, [feed(feed_id="mw")])
    row = summary[0]
    assert row.total_entries == 10
    assert row.entries_with_domains == 6
    assert row.pct_with_domains == 60.0
    assert row.unique_domains == 6


def test_group_union_counts_below_member_sum():
    f1, f2 = feed(feed_id="g-ph", group="g"), feed(feed_id="g-mw", group="g")
    r1 = ingest(f1, lines(["http://shared-site.com/,phishing,2021-05-01T00:00:00,"]),
                RULES)
    r2 = ingest(f2, lines(["http://shared-site.com/,malware,2021-05-01T00:00:00,",
                           "http://only-here.com/,malware,2021-05-01T00:00:00,"]),
                RULES)
    rows = summarize(r1.events + r2.events, [f1, f2])
    group_row = next(r for r in rows if r.feed_id == "g" and r.is_group)
    members = [r for r in rows if not r.is_group]
    assert group_row.unique_domains == 2
    assert group_row.unique_domains < sum(m.unique_domains for m in members)


def test_empty_feed_gives_zero_row():
    rows = summarize([], [feed(feed_id="empty")])
    assert rows[0].total_entries == 0
    assert rows[0].pct_with_domains == 0.0
    assert rows[0].unique_domains == 0


@st.composite
def _event_batches(draw):
    feed_obj = feed(feed_id="prop")
    hosts = draw(st.lists(
        st.sampled_from(["a.example.com", "b.example.com", "c.example.com",
                         "192.0.2.9"]),
        min_size=1, max_size=12))
    rows = [f"http://{h}/x,spam,2021-05-01T00:00:00," for h in hosts]
    return ingest(feed_obj, lines(rows), RULES).events


@given(_event_batches(), st.randoms())
def test_summary_invariant_under_reorder_and_duplication(events, rng):
    base = summarize(events, [feed(feed_id="prop")])
    shuffled = list(events) + [events[0]]
    rng.shuffle(shuffled)
    again = summarize(shuffled, [feed(feed_id="prop")])
    assert [(r.feed_id, r.unique_domains, r.entries_with_domains, r.total_entries)
            for r in base] == \
        [(r.feed_id, r.unique_domains, r.entries_with_domains, r.total_entries)
         for r in again]


@given(_event_batches())
def test_summary_ordering_invariants(events):
    for row in summarize(events, [feed(feed_id="prop")]):
        assert row.entries_with_domains <= row.total_entries
        assert row.unique_domains <= row.entries_with_domains
