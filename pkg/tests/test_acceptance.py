"""Acceptance suite: one test per release criterion, each printed with
its runtime against the stated budget. Run with ``pytest -s
tests/test_acceptance.py`` to see the per-criterion lines.
"""

import contextlib
import random
import time
from datetime import datetime, timedelta
from fractions import Fraction

import pytest

from dnsabuse import dnssec, dnswire
from dnsabuse.classify import (
    ClassifierConfig,
    CohortIndex,
    Label,
    Rule,
    classify,
    generate_variants,
    load_confusables,
)
from dnsabuse.config import packaged_table
from dnsabuse.contacts import RfcSide, SmtpProber, assess
from dnsabuse.domains import Fqdn, RegisteredDomain, load_suffix_set
from dnsabuse.dnswire import Record
from dnsabuse.feeds import AbuseEvent, AbuseType
from dnsabuse.fixtures import (
    DnsFixtureServer,
    SignedHierarchy,
    SmtpFixtureServer,
    Zone,
    silent_port,
)
from dnsabuse.nettables import load_ip2asn, load_ip2country
from dnsabuse.posture import (
    DmarcTag,
    DnssecCategory,
    ProbeStatus,
    RrsigValidity,
    Validation,
    aggregate_resolvers,
    check_rrsig_validity,
    evaluate_dmarc,
    load_key_policy,
    make_probe_domain,
    probe_resolver,
    scan_dnssec_posture,
)
from dnsabuse.registration import RegistrationRecord, Source
from dnsabuse.reputation import SizeProvenance, SizeTable, build_rows, occurrence_by_tld
from dnsabuse.resolver import StubResolver
from dnsabuse.spf import SpfFetchStatus, SpfResult, evaluate_spf
from dnsabuse.uptime import (
    CENSOR_HORIZON,
    DnsState,
    DnsStateKind,
    HttpState,
    SNAPSHOT_OFFSETS,
    Snapshot,
    SnapshotSeries,
    detect_takedown,
    km_survival,
    schedule,
    survival,
)


@contextlib.contextmanager
def criterion(number, description, budget_seconds):
    start = time.perf_counter()
    failed = False
    try:
        yield
    except BaseException:
        failed = True
        raise
    finally:
        elapsed = time.perf_counter() - start
        status = "FAIL" if failed or elapsed >= budget_seconds else "PASS"
        print(f"ACCEPTANCE {number:>2}: {status} ({elapsed:.2f}s / "
              f"{budget_seconds:.0f}s budget) {description}")
    assert elapsed < budget_seconds, (
        f"criterion {number} exceeded runtime budget: {elapsed:.2f}s")


def _domain(name, tld=None):
    tld = tld or name.rsplit(".", 1)[-1]
    return RegisteredDomain(name=name, public_suffix=tld, tld=tld)


def _event(host, abuse, first_seen=datetime(2021, 5, 10)):
    registered = _domain(".".join(host.split(".")[-2:]))
    return AbuseEvent(feed_id="acc", raw_entry=f"http://{host}/", entry_kind="url",
                      abuse_type=abuse, first_seen=first_seen,
                      registered_domain=registered,
                      fqdn=Fqdn(name=host, registered=registered))


# -----------------------------------------------------------------------


def test_criterion_01_rate_formula_reproduces_published_values():
    with criterion(1, "rate formula on published (occurrence, rate) pairs", 1.0):
        cases = [("su", AbuseType.SPAM, 32_974, 1_837.10, 2),
                 ("xyz", AbuseType.SPAM, 48_790, 161.0, 0)]
        sizes = SizeTable()
        events = []
        for tld, abuse, occurrence_count, printed, _ in cases:
            sizes.set(tld, round(occurrence_count * 10_000 / printed),
                      SizeProvenance.ZONE_FILE)
            registered = [_domain(f"d{i}.{tld}") for i in range(occurrence_count)]
            events.extend(AbuseEvent(
                feed_id="acc", raw_entry=rd.name, entry_kind="domain",
                abuse_type=abuse, first_seen=datetime(2021, 5, 10),
                registered_domain=rd) for rd in registered)
        rows = build_rows(occurrence_by_tld(events), sizes)
        by_tld = {(r.entity_key, r.abuse_type): r for r in rows}
        for tld, abuse, occurrence_count, printed, decimals in cases:
            row = by_tld[(tld, abuse)]
            assert row.occurrence == occurrence_count
            assert round(row.rate, decimals) == pytest.approx(printed)


def test_criterion_02_classifier_boundary_suite():
    with criterion(2, "classifier boundary suite, 50 hand-built cases", 1.0):
        lexicon = generate_variants(
            ["wellsfargo", "paypal", "chase"],
            load_confusables(packaged_table("confusables.csv").splitlines()))
        providers = load_suffix_set(["000webhostapp.com", "ngrok.io"])
        config = ClassifierConfig()
        t0 = datetime(2021, 2, 1, 12, 0, 0)

        def reg(domain, created, iana=1068):
            return RegistrationRecord(domain=domain, source=Source.RDAP,
                                      iana_id=iana, creation_date=created)

        cases = []  # (event, registration, expected_label, required/forbidden rules)
        # 20 age-boundary cases: days 89..98 fire, 99..108 do not; creation
        # times are staggered so no accidental batch forms
        for day in range(89, 99):
            domain = f"age{day}.com"
            created = t0 + timedelta(seconds=day)
            cases.append((_event(domain, AbuseType.SPAM,
                                 created + timedelta(days=day)),
                          reg(domain, created), Label.MALICIOUSLY_REGISTERED,
                          {Rule.AGE}, set()))
        for day in range(99, 109):
            domain = f"age{day}.com"
            created = t0 + timedelta(seconds=day)
            cases.append((_event(domain, AbuseType.SPAM,
                                 created + timedelta(days=day)),
                          reg(domain, created), Label.COMPROMISED,
                          set(), {Rule.AGE}))
        # 10 batch cases: five same-registrar same-instant pairs
        batch_regs = []
        for pair in range(5):
            created = datetime(2020, 3, 1, 8, 0, pair)
            for side in ("a", "b"):
                domain = f"batch{pair}{side}.com"
                batch_regs.append(reg(domain, created))
                cases.append((_event(domain, AbuseType.SPAM,
                                     created + timedelta(days=300)),
                              batch_regs[-1], Label.MALICIOUSLY_REGISTERED,
                              {Rule.BATCH}, {Rule.AGE}))
        # 5 brand cases including the hyphen-tokenized flagship
        brand_hosts = ["wells-fargo-login-security.work", "paypal-alerts.com",
                       "secure-chase-login.net", "paypa1-billing.com",
                       "login.wellsfargo-id.net"]
        for i, host in enumerate(brand_hosts):
            domain = ".".join(host.split(".")[-2:])
            cases.append((_event(host, AbuseType.PHISHING, datetime(2021, 6, 1)),
                          reg(domain, datetime(2015, 1, 1, 0, 0, i)),
                          Label.MALICIOUSLY_REGISTERED, {Rule.BRAND_MATCH}, set()))
        # 5 free-provider exclusions (brand tokens must not override)
        for i in range(5):
            host = f"paypal-login{i}.000webhostapp.com"
            cases.append((_event(host, AbuseType.PHISHING, datetime(2021, 6, 1)),
                          None, Label.EXCLUDED, set(), set()))
        # 5 old quiet compromised domains (staggered creations again)
        for i in range(5):
            domain = f"venerable{i}.com"
            cases.append((_event(domain, AbuseType.PHISHING, datetime(2021, 6, 1)),
                          reg(domain, datetime(2012, 4, 1, 0, 0, i)),
                          Label.COMPROMISED, set(), set()))
        # 5 no-registration-data exclusions
        for i in range(5):
            domain = f"nodata{i}.com"
            cases.append((_event(domain, AbuseType.SPAM, datetime(2021, 6, 1)),
                          None, Label.EXCLUDED, set(), set()))
        assert len(cases) == 50

        cohort = CohortIndex.build(
            [r for _, r, _, _, _ in cases if r is not None])
        passed = 0
        for event, registration, expected_label, required, forbidden in cases:
            verdict = classify(event, registration, cohort, lexicon, providers,
                               config)
            assert verdict.label is expected_label, event.raw_entry
            assert required <= verdict.fired_rules, event.raw_entry
            assert not (forbidden & verdict.fired_rules), event.raw_entry
            passed += 1
        assert passed == 50


def test_criterion_03_dnssec_categorization_matrix():
    with criterion(3, "DNSSEC categorization over the signed hierarchy", 30.0):
        now = int(time.time())
        hierarchy = SignedHierarchy(tld="test", now=now)
        combos = {
            "c000": (False, False, False),
            "c100": (True, False, False),
            "c010": (False, True, False),
            "c001": (False, False, True),
            "c110": (True, True, False),
            "c101": (True, False, True),
            "c011": (False, True, True),
            "c111": (True, True, True),
        }
        domains = {
            label: hierarchy.add_domain(label, publish_ds=ds, publish_dnskey=key,
                                        publish_rrsig=sig)
            for label, (ds, key, sig) in combos.items()
        }
        domains["tampered"] = hierarchy.add_domain("tampered", tamper=True)
        policy = load_key_policy(packaged_table("dnssec_algorithms.csv").splitlines())
        expected = {
            "c000": DnssecCategory.UNSIGNED,
            "c100": DnssecCategory.INCORRECTLY_SIGNED,
            "c010": DnssecCategory.INCORRECTLY_SIGNED,
            "c001": DnssecCategory.INCORRECTLY_SIGNED,
            "c110": DnssecCategory.INCORRECTLY_SIGNED,
            "c101": DnssecCategory.INCORRECTLY_SIGNED,
            "c011": DnssecCategory.INCORRECTLY_SIGNED,  # island of security
            "c111": DnssecCategory.CORRECTLY_SIGNED,
            "tampered": DnssecCategory.INCORRECTLY_SIGNED,  # bogus
        }
        with DnsFixtureServer(hierarchy.zone) as server:
            resolver = StubResolver(server=server.address, timeout=1.0,
                                    retries=0, checking_disabled=True)
            for label, want in expected.items():
                posture = scan_dnssec_posture(
                    domains[label], resolver, hierarchy.trust_anchor, policy,
                    now=now, probe_nsec=False)
                assert posture.responsive, label
                assert posture.category is want, label
            island = scan_dnssec_posture(domains["c011"], resolver,
                                         hierarchy.trust_anchor, policy,
                                         now=now, probe_nsec=False)
            assert island.validation is Validation.INSECURE
            full = scan_dnssec_posture(domains["c111"], resolver,
                                       hierarchy.trust_anchor, policy,
                                       now=now, probe_nsec=False)
            assert full.validation is Validation.SECURE

        # expiration >= now boundary: equal is still valid
        key = dnssec.generate_key("b.test.")
        rrset = [Record.a("b.test.", "192.0.2.1")]
        sig_now = dnssec.sign_rrset(rrset, key, "b.test.", now - 10, now)
        assert check_rrsig_validity(sig_now, now) is RrsigValidity.VALID
        sig_past = dnssec.sign_rrset(rrset, key, "b.test.", now - 10, now - 1)
        assert check_rrsig_validity(sig_past, now) is RrsigValidity.EXPIRED


def test_criterion_04_spf_evaluator():
    with criterion(4, "SPF permerror taxonomy + termination", 10.0):
        identity = ("192.0.2.99", "probe.invalid", "postmaster@probe.invalid")
        zone = Zone()
        with DnsFixtureServer(zone) as server:
            resolver = StubResolver(server=server.address, timeout=1.0, retries=0)

            def evaluate(domain):
                return evaluate_spf(domain, identity, resolver)

            # permerror cause 1: two records
            zone.clear()
            zone.add(Record.txt("two.example.", "v=spf1 -all"))
            zone.add(Record.txt("two.example.", "v=spf1 +all"))
            outcome = evaluate("two.example")
            assert outcome.result is SpfResult.PERMERROR
            assert outcome.error_detail == "Two or more SPF records found"

            # permerror cause 2: more than 10 lookups
            zone.clear()
            zone.add(Record.txt("deep.example.", "v=spf1 " + " ".join(
                f"include:i{n}.example" for n in range(11)) + " -all"))
            for n in range(11):
                zone.add(Record.txt(f"i{n}.example.", "v=spf1 -all"))
            outcome = evaluate("deep.example")
            assert outcome.result is SpfResult.PERMERROR
            assert outcome.error_detail == "Too many DNS lookups"

            # permerror cause 3: void lookup limit of 2
            zone.clear()
            zone.add(Record.txt("voidy.example.",
                                "v=spf1 a:v1.example a:v2.example a:v3.example -all"))
            for name in ("v1.example.", "v2.example.", "v3.example."):
                zone.add(Record.txt(name, "present-but-no-a"))
            outcome = evaluate("voidy.example")
            assert outcome.result is SpfResult.PERMERROR
            assert outcome.error_detail == "Void lookup limit of 2 exceeded"

            # permerror cause 4: malformed ip4
            zone.clear()
            zone.add(Record.txt("typo.example.", "v=spf1 ip4:192.0.2.1?all"))
            outcome = evaluate("typo.example")
            assert outcome.result is SpfResult.PERMERROR
            assert outcome.error_detail.startswith("Invalid IP4 address")

            # +all passes; absent record maps to None
            zone.clear()
            zone.add(Record.txt("open.example.", "v=spf1 +all"))
            assert evaluate("open.example").result is SpfResult.PASS
            zone.clear()
            zone.add(Record.a("silent.example.", "192.0.2.4"))
            outcome = evaluate("silent.example")
            assert outcome.fetch_status is SpfFetchStatus.NO_RECORD
            assert outcome.result is SpfResult.NONE

            # 100 randomized include graphs always terminate
            rng = random.Random(7208)
            for _ in range(100):
                zone.clear()
                names = [f"r{i}.example." for i in range(rng.randrange(1, 6))]
                for name in names:
                    links = [f"include:{rng.choice(names).rstrip('.')}"
                             for _ in range(rng.randrange(0, 3))]
                    tail = rng.choice(["-all", "~all", "+all", "?all", ""])
                    zone.add(Record.txt(name, ("v=spf1 " + " ".join(links + [tail])).strip()))
                outcome = evaluate(names[0].rstrip("."))
                assert outcome.result is None or isinstance(outcome.result, SpfResult)


def test_criterion_05_dmarc_parsing():
    with criterion(5, "DMARC policy mapping", 1.0):
        zone = Zone()
        zone.add(Record.txt("_dmarc.n.example.", "v=DMARC1; p=none"))
        zone.add(Record.txt("_dmarc.q.example.", "v=DMARC1; p=quarantine"))
        zone.add(Record.txt("_dmarc.r.example.", "v=DMARC1; p=reject; rua=mailto:a@e"))
        with DnsFixtureServer(zone) as server:
            resolver = StubResolver(server=server.address, timeout=1.0, retries=0)
            assert evaluate_dmarc("n.example", resolver).p_tag is DmarcTag.NONE
            assert evaluate_dmarc("q.example", resolver).p_tag is DmarcTag.QUARANTINE
            assert evaluate_dmarc("r.example", resolver).p_tag is DmarcTag.REJECT
            absent = evaluate_dmarc("x.example", resolver)  # NXDOMAIN
            assert not absent.present
            assert absent.p_tag is None


def test_criterion_06_open_resolver_classification():
    with criterion(6, "open-resolver statuses + aggregation recount", 10.0):
        expected_ip = "198.51.100.7"

        def authoritative(answer):
            def behavior(query):
                response = dnswire.make_response(query)
                if answer is not None:
                    response.answers = [Record.a(query.question[0], answer)]
                return response
            return behavior

        servers = {
            ProbeStatus.OPEN_CORRECT: DnsFixtureServer(
                behavior=authoritative(expected_ip)).start(),
            ProbeStatus.OPEN_EMPTY: DnsFixtureServer(
                behavior=authoritative(None)).start(),
            ProbeStatus.OPEN_BOGUS: DnsFixtureServer(
                behavior=authoritative("203.0.113.66")).start(),
        }
        try:
            for want, server in servers.items():
                probe = make_probe_domain("127.0.0.1", "acc", "probe.test")
                result = probe_resolver(server.address, probe, expected_ip,
                                        timeout=0.5)
                assert result.status is want
            closed = probe_resolver(("127.0.0.1", silent_port()),
                                    make_probe_domain("127.0.0.1", "acc", "probe.test"),
                                    expected_ip, timeout=0.3)
            assert closed.status is ProbeStatus.CLOSED_OR_FILTERED
        finally:
            for server in servers.values():
                server.stop()

        # 30-target aggregation vs brute-force recount
        from dnsabuse.posture import ResolverProbeResult

        rng = random.Random(30)
        ip2asn = load_ip2asn(["10.1.0.0/16\t65001\tONE", "10.2.0.0/16\t65002\tTWO"])
        ip2cc = load_ip2country(["10.1.0.0/16\tPL", "10.2.0.0/16\tBR"])
        results = [ResolverProbeResult(
            target_ip=f"10.{rng.choice([1, 2])}.0.{i}",
            status=rng.choice(list(ProbeStatus))) for i in range(30)]
        aggregates = aggregate_resolvers(results, ip2asn, ip2cc,
                                         {65001: 1024, 65002: 2048},
                                         {"PL": "European Union", "BR": "South America"})
        recount = {}
        for result in results:
            asn = 65001 if result.target_ip.startswith("10.1.") else 65002
            recount.setdefault(asn, {}).setdefault(result.status, 0)
            recount[asn][result.status] += 1
        for row in aggregates.by_asn:
            want = recount[row["asn"]]
            assert row["open_correct"] == want.get(ProbeStatus.OPEN_CORRECT, 0)
            size = {65001: 1024, 65002: 2048}[row["asn"]]
            assert row["open_ratio_pct"] == pytest.approx(
                round(100.0 * row["open_correct"] / size, 2))


def test_criterion_07_contact_prober_categories():
    with criterion(7, "SMTP matrix covers all five RFC-side categories", 10.0):
        smtp_ok = SmtpFixtureServer.accepting("abuse").start()
        smtp_no = SmtpFixtureServer.reject_all().start()
        smtp_all = SmtpFixtureServer.catch_all().start()
        dead = silent_port()
        zone = Zone()
        for domain in ("found", "nobody", "wildcard", "unreachable"):
            zone.add(Record.mx(f"{domain}.example.", 10, f"mx.{domain}.example."))
        zone.add(Record.a("nomx.example.", "192.0.2.1"))
        ports = {"mx.found.example": smtp_ok.port,
                 "mx.nobody.example": smtp_no.port,
                 "mx.wildcard.example": smtp_all.port,
                 "mx.unreachable.example": dead}
        try:
            with DnsFixtureServer(zone) as dns_server:
                resolver = StubResolver(server=dns_server.address, timeout=1.0,
                                        retries=0)
                prober = SmtpProber(
                    endpoint_for=lambda host: ("127.0.0.1", ports.get(host, 1)),
                    timeout=0.5, rng=random.Random(2142))
                outcomes = {domain: assess(f"{domain}.example", resolver, prober)
                            for domain in ("found", "nobody", "wildcard",
                                           "unreachable", "nomx")}
        finally:
            for server in (smtp_ok, smtp_no, smtp_all):
                server.stop()
        assert outcomes["found"].rfc_side is RfcSide.CONTACT_FOUND
        assert outcomes["found"].rfc_valid_aliases == frozenset({"abuse"})
        assert outcomes["nobody"].rfc_side is RfcSide.NO_CONTACT_FOUND
        assert outcomes["wildcard"].rfc_side is RfcSide.CATCH_ALL
        assert outcomes["wildcard"].rfc_valid_aliases == frozenset()
        assert outcomes["unreachable"].rfc_side is RfcSide.CONN_ERROR
        assert outcomes["nomx"].rfc_side is RfcSide.NO_MX_RECORD
        assert {o.rfc_side for o in outcomes.values()} == set(RfcSide)


def test_criterion_08_survival_analysis():
    with criterion(8, "KM vs oracle (1000 corpora) + censored tables + 0.32", 5.0):
        rng = random.Random(1912)
        for _ in range(1000):
            n = rng.randrange(1, 20)
            durations = [float(rng.randrange(0, 9)) for _ in range(n)]
            curve = km_survival(durations, [True] * n)
            steps = []
            if min(durations) > 0:
                steps.append((0.0, 1.0))
            for t in sorted(set(durations)):
                alive = sum(1 for d in durations if d > t)
                steps.append((float(t), float(Fraction(alive, n))))
            assert curve.steps == steps  # exact equality, bit for bit

        hand_cases = [
            ([1, 2, 3], [True, False, True], [(0.0, 1.0), (1.0, 2 / 3), (3.0, 0.0)]),
            ([1, 1, 2, 2, 3], [True, True, False, True, True],
             [(0.0, 1.0), (1.0, 3 / 5), (2.0, 2 / 5), (3.0, 0.0)]),
            ([5, 6], [False, False], [(0.0, 1.0)]),
            ([2, 2], [True, False], [(0.0, 1.0), (2.0, 0.5)]),
            ([1, 2, 3, 4], [False, True, False, True],
             [(0.0, 1.0), (2.0, 2 / 3), (4.0, 0.0)]),
            ([1, 2, 2, 4, 5], [True, True, True, False, True],
             [(0.0, 1.0), (1.0, 4 / 5), (2.0, 2 / 5), (5.0, 0.0)]),
            ([3], [False], [(0.0, 1.0)]),
            ([3], [True], [(0.0, 1.0), (3.0, 0.0)]),
            ([0, 1], [True, True], [(0.0, 0.5), (1.0, 0.0)]),
            ([1, 1, 1, 8, 8, 8], [True, False, True, True, True, False],
             [(0.0, 1.0), (1.0, 2 / 3), (8.0, 2 / 9)]),
        ]
        for durations, observed, expected in hand_cases:
            curve = km_survival([float(d) for d in durations], observed)
            assert len(curve.steps) == len(expected)
            for (got_t, got_p), (want_t, want_p) in zip(curve.steps, expected):
                assert got_t == want_t and got_p == pytest.approx(want_p, abs=1e-12)

        # corpus shaped to survive at 32% after four days
        def series(down_after):
            snaps = []
            for offset in SNAPSHOT_OFFSETS:
                is_down = down_after is not None and offset >= down_after
                snaps.append(Snapshot(
                    url="u", taken_at=datetime(2021, 5, 1) + offset,
                    scheduled_offset=offset,
                    dns_state=DnsState(DnsStateKind.NXDOMAIN if is_down
                                       else DnsStateKind.RESOLVED,
                                       () if is_down else ("192.0.2.1",)),
                    http_state=HttpState(status_code=200, content_digest="x")))
            return SnapshotSeries(url="u", blacklisted_at=datetime(2021, 5, 1),
                                  snapshots=snaps)

        corpus = [series(timedelta(hours=24)) for _ in range(68)]
        corpus += [series(None) for _ in range(32)]
        curve = survival(corpus)
        assert curve.probability_at(4 * 86400.0) == pytest.approx(0.32, abs=0.01)


def test_criterion_09_uptime_schedule_and_takedown():
    with criterion(9, "schedule offsets + takedown fixtures", 1.0):
        t0 = datetime(2021, 5, 1)
        offsets = [s - t0 for s in schedule(t0)]
        assert offsets == [
            timedelta(0), timedelta(minutes=5), timedelta(minutes=30),
            timedelta(hours=1), timedelta(hours=6), timedelta(hours=12),
            timedelta(hours=24), timedelta(hours=48), timedelta(weeks=1),
            timedelta(weeks=2), timedelta(weeks=3), timedelta(weeks=4),
        ]
        assert len(offsets) == 12

        def snap(offset, down):
            return Snapshot(
                url="u", taken_at=t0 + offset, scheduled_offset=offset,
                dns_state=DnsState(DnsStateKind.NXDOMAIN if down
                                   else DnsStateKind.RESOLVED,
                                   () if down else ("192.0.2.1",)),
                http_state=HttpState(status_code=200, content_digest="x"))

        down_at_6h = SnapshotSeries(
            url="u", blacklisted_at=t0,
            snapshots=[snap(o, o >= timedelta(hours=6)) for o in SNAPSHOT_OFFSETS])
        never_down = SnapshotSeries(
            url="u", blacklisted_at=t0,
            snapshots=[snap(o, False) for o in SNAPSHOT_OFFSETS])
        down_at_start = SnapshotSeries(
            url="u", blacklisted_at=t0,
            snapshots=[snap(o, True) for o in SNAPSHOT_OFFSETS])
        assert detect_takedown(down_at_6h) == (timedelta(hours=6), False)
        assert detect_takedown(never_down) == (CENSOR_HORIZON, True)
        assert detect_takedown(down_at_start) == (timedelta(0), False)


def test_criterion_10_end_to_end_determinism(tmp_path):
    with criterion(10, "ingest->classify->reputation->report twice, identical CSVs", 10.0):
        from dnsabuse.cli import main
        from dnsabuse.storage import append_jsonl, registration_to_dict

        (tmp_path / "suffixes.dat").write_text("com\nnet\nwork\n")
        (tmp_path / "sizes.csv").write_text("entity,size,provenance\n"
                                            "com,1000000,zone_file\n"
                                            "net,500000,zone_file\n")
        (tmp_path / "feed.csv").write_text(
            "raw_entry,abuse_type,first_seen,target_brand\n"
            "http://wells-fargo-login-security.work/p,phishing,2021-05-03T10:00:00,Wells Fargo\n"
            "http://fresh-one.com/x,phishing,2021-05-04T11:00:00,\n"
            "http://old-site.net/y,phishing,2021-05-05T12:00:00,\n"
            "bulk.com,spam,2021-05-02T00:00:00,\n")
        (tmp_path / "feeds.csv").write_text(
            "feed_id,group,entry_type,abuse_types,period_start,period_end,path\n"
            "mixed,,url,phishing|spam,2021-04-01T00:00:00,2021-07-01T00:00:00,feed.csv\n")
        data_dir = tmp_path / "run"
        data_dir.mkdir()
        registrations = [
            RegistrationRecord(domain="fresh-one.com", source=Source.RDAP,
                               iana_id=1068, creation_date=datetime(2021, 5, 1)),
            RegistrationRecord(domain="old-site.net", source=Source.RDAP,
                               iana_id=146, creation_date=datetime(2013, 1, 1)),
            RegistrationRecord(domain="bulk.com", source=Source.RDAP,
                               iana_id=1068, creation_date=datetime(2021, 4, 25)),
        ]
        append_jsonl(data_dir / "registrations.jsonl",
                     (registration_to_dict(r) for r in registrations))
        conf = tmp_path / "run.conf"
        conf.write_text(f"data_dir = {data_dir}\n"
                        f"tables.suffix_list = {tmp_path / 'suffixes.dat'}\n"
                        f"tables.feeds = {tmp_path / 'feeds.csv'}\n"
                        f"tables.sizes = {tmp_path / 'sizes.csv'}\n")

        def run_pipeline(out):
            for argv in (["ingest"], ["classify"], ["reputation"],
                         ["report", "--table", "tld-rates", "--out", out],
                         ["report", "--table", "mal-vs-comp", "--out", out],
                         ["report", "--table", "feed-summary"]):
                assert main(["--config", str(conf)] + argv) == 0

        run_pipeline(str(tmp_path / "first"))
        first_summary = (data_dir / "feed_summary.csv").read_bytes()
        run_pipeline(str(tmp_path / "second"))
        second_summary = (data_dir / "feed_summary.csv").read_bytes()
        assert first_summary == second_summary
        for name in ("tld_rates.csv", "mal_vs_comp.csv"):
            assert (tmp_path / "first" / name).read_bytes() == \
                (tmp_path / "second" / name).read_bytes(), name
