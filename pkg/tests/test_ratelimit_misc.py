
from dnsabuse import dnswire
from dnsabuse.dnswire import Record
from dnsabuse.fixtures import DnsFixtureServer, Zone
from dnsabuse.ratelimit import OptOutList, PerKeyRateLimiter, TokenBucket, network_key
from dnsabuse.resolver import StubResolver


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t

    def sleep(self, seconds):
        self.t += seconds


def test_token_bucket_blocks_past_burst():
    clock = FakeClock()
    bucket = TokenBucket(rate_per_second=2.0, burst=2.0,
                         clock=clock, sleep=clock.sleep)
    assert bucket.try_acquire()
    assert bucket.try_acquire()
    assert not bucket.try_acquire()  # burst spent, no time has passed
    bucket.acquire()  # advances the fake clock instead of real sleeping
    assert clock.t >= 0.5


def test_per_key_limiter_is_independent_per_key():
    clock = FakeClock()
    limiter = PerKeyRateLimiter(1.0, burst=1.0, clock=clock, sleep=clock.sleep)
    assert limiter.bucket("a").try_acquire()
    assert limiter.bucket("b").try_acquire()  # b has its own bucket
    assert not limiter.bucket("a").try_acquire()


def test_network_key_groups_by_slash24():
    assert network_key("192.0.2.7") == network_key("192.0.2.250")
    assert network_key("192.0.2.7") != network_key("192.0.3.7")
    assert network_key("2001:db8::1") == "2001:db8::/48"


def test_opt_out_list():
    opt_out = OptOutList.from_lines(["198.51.100.0/24", "# comment", ""])
    assert opt_out.excluded("198.51.100.9")
    assert not opt_out.excluded("203.0.113.9")


def test_registration_client_throttles_per_endpoint():
    from dnsabuse.registration import RegistrationClient, TldEndpoints

    clock = FakeClock()
    limiter = PerKeyRateLimiter(1.0, burst=1.0, clock=clock, sleep=clock.sleep)
    client = RegistrationClient({"com": TldEndpoints()}, rate_limiter=limiter)
    client._throttle("whois.example:43")
    client._throttle("whois.example:43")  # second call must wait on the bucket
    assert clock.t >= 1.0


# -- resolver TCP fallback ----------------------------------------------------


def test_resolver_falls_back_to_tcp_on_truncation():
    zone = Zone()
    # enough TXT payload that a 512-byte UDP response cannot carry it
    for i in range(8):
        zone.add(Record.txt("big.test.", f"chunk-{i}-" + "x" * 180))
    server = DnsFixtureServer(zone, udp_payload_limit=512)
    with server:
        resolver = StubResolver(server=server.address, timeout=1.0, retries=0)
        reply = resolver.query("big.test", dnswire.TXT, want_dnssec=False)
    texts = [r.txt_value() for r in reply.answers]
    assert len(texts) == 8  # complete set only possible over TCP
    assert not reply.truncated


# -- session budget ------------------------------------------------------------


def test_assess_uses_at_most_seven_smtp_sessions():
    import random

    from dnsabuse.contacts import SmtpProber, assess
    from dnsabuse.fixtures import SmtpFixtureServer

    zone = Zone()
    zone.add(Record.mx("counted.example.", 10, "mx.counted.example."))
    zone.add(Record.soa("counted.example.", "ns1.example.",
                        "hostmaster.counted.example."))
    sessions = []
    with SmtpFixtureServer.accepting("abuse", "noc") as smtp, \
            DnsFixtureServer(zone) as dns_server:
        def endpoint_for(host):
            sessions.append(host)
            return ("127.0.0.1", smtp.port)

        resolver = StubResolver(server=dns_server.address, timeout=1.0)
        prober = SmtpProber(endpoint_for=endpoint_for, timeout=1.0,
                            rng=random.Random(0))
        assess("counted.example", resolver, prober)
    # catch-all + five aliases + the SOA-side catch-all/contact probes,
    # never more than seven sessions total for one domain
    assert len(sessions) <= 7


# -- endpoint map + key reuse ----------------------------------------


def test_load_endpoint_map():
    from dnsabuse.registration import load_endpoint_map

    table = load_endpoint_map([
        "tld,rdap_url,whois_host,whois_port",
        "com,https://rdap.example,whois.example,4343",
        "net,,whois.other.example",
        "org,https://rdap.org.example,,",
    ])
    assert table["com"].rdap_url == "https://rdap.example"
    assert table["com"].whois_port == 4343
    assert table["net"].rdap_url is None
    assert table["net"].whois_host == "whois.other.example"
    assert table["org"].whois_host is None


def test_dnskey_reuse_report_flags_shared_keys():
    from dnsabuse import dnssec
    from dnsabuse.posture import dnskey_reuse_report

    shared = dnssec.generate_key("a.test.").dnskey
    unique = dnssec.generate_key("c.test.").dnskey
    report = dnskey_reuse_report({
        "a.test": [shared],
        "b.test": [Record.dnskey("b.test.", 256, 13,
                                 shared.dnskey_fields()["key"])],
        "c.test": [unique],
    })
    assert list(report.values()) == [["a.test", "b.test"]]


# -- report bucket filter --------------------------------------------


def test_rates_table_bucket_filter(tmp_path):
    from dnsabuse.feeds import AbuseType
    from dnsabuse.reports import rates_table
    from dnsabuse.reputation import ReputationRow

    rows = [
        ReputationRow("small", AbuseType.SPAM, 10, size=5_000, rate=20.0),
        ReputationRow("large", AbuseType.SPAM, 100, size=2_000_000, rate=0.5),
        ReputationRow("nosize", AbuseType.SPAM, 7, size=None, rate=None),
    ]
    out = tmp_path / "rates.csv"
    rates_table(rows, out, bucket="(1M,inf)", abuse=AbuseType.SPAM)
    lines = out.read_text().splitlines()
    assert lines[1].startswith("large,")
    assert len(lines) == 2  # header + the single in-bucket row


def test_summary_counts_key_findings(tmp_path):
    from dnsabuse.posture import DnssecPosture, KeyFinding, KeyPolicy, Validation
    from dnsabuse.reports import dnssec_summary_table

    posture = DnssecPosture(
        domain="x.test", responsive=True, has_ds=True, has_dnskey=True,
        has_rrsig=True, validation=Validation.SECURE, category=None,
        key_findings=[KeyFinding(8, KeyPolicy.RECOMMENDED, 1024),
                      KeyFinding(13, KeyPolicy.RECOMMENDED, 256),
                      KeyFinding(1, KeyPolicy.MUST_NOT, 512)])
    out = tmp_path / "sum.csv"
    dnssec_summary_table([posture], out, key_size_floor=2048)
    text = out.read_text()
    assert "keys_recommended,2" in text
    assert "keys_must_not,1" in text
    # the 256-bit key is ECDSA and exempt; the 1024-bit RSA is counted,
    # algorithm 1 keys are RSA too
    assert "keys_below_2048_bits,1" in text


