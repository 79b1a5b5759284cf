import json
from datetime import datetime

import pytest

from dnsabuse.cli import (
    EXIT_BUDGET,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_USAGE,
    main,
)
from dnsabuse.registration import RegistrationRecord, Source
from dnsabuse.storage import append_jsonl, registration_to_dict


@pytest.fixture
def workspace(tmp_path):
    """Config + input tables + two small feeds, enough to drive
    ingest -> classify -> reputation -> report end to end offline."""
    (tmp_path / "suffixes.dat").write_text("com\nnet\nwork\nexample\nio\n")
    (tmp_path / "sizes.csv").write_text(
        "entity,size,provenance\n"
        "com,3030435,zone_file\n"
        "net,179489,zone_file\n"
        "as:65001,1024,third_party_estimate\n"
    )
    (tmp_path / "feed_phish.csv").write_text(
        "raw_entry,abuse_type,first_seen,target_brand\n"
        "http://wells-fargo-login-security.work/login,phishing,2021-05-03T10:00:00,Wells Fargo\n"
        "http://paypal-refund.com/x,phishing,2021-05-04T11:00:00,PayPal\n"
        "http://old-blog.net/hacked,phishing,2021-05-05T12:00:00,PayPal\n"
        "http://victim1.000webhostapp.com/p,phishing,2021-05-06T13:00:00,Facebook Inc.\n"
    )
    (tmp_path / "feed_spam.csv").write_text(
        "raw_entry,abuse_type,first_seen\n"
        "bulk-mailer.com,spam,2021-05-02T00:00:00\n"
        "bulk-mailer.com,spam,2021-05-09T00:00:00\n"
        "http://192.0.2.33/,spam,2021-05-02T09:00:00\n"
    )
    (tmp_path / "feeds.csv").write_text(
        "feed_id,group,entry_type,abuse_types,period_start,period_end,path\n"
        "phish-a,phish,url,phishing,2021-04-01T00:00:00,2021-07-01T00:00:00,feed_phish.csv\n"
        "spam-b,,domain,spam,2021-04-01T00:00:00,2021-07-01T00:00:00,feed_spam.csv\n"
    )
    registrations = [
        RegistrationRecord(domain="wells-fargo-login-security.work",
                           source=Source.RDAP, iana_id=1068,
                           creation_date=datetime(2021, 5, 1)),
        RegistrationRecord(domain="paypal-refund.com", source=Source.RDAP,
                           iana_id=1068, creation_date=datetime(2021, 5, 1)),
        RegistrationRecord(domain="old-blog.net", source=Source.WHOIS,
                           raw_registrar_name="GoDaddy.com, LLC", iana_id=146,
                           creation_date=datetime(2014, 2, 1)),
        RegistrationRecord(domain="bulk-mailer.com", source=Source.RDAP,
                           iana_id=1068, creation_date=datetime(2021, 4, 20)),
    ]
    data_dir = tmp_path / "run"
    data_dir.mkdir()
    append_jsonl(data_dir / "registrations.jsonl",
                 (registration_to_dict(r) for r in registrations))
    (tmp_path / "run.conf").write_text(
        f"data_dir = {data_dir}\n"
        "mode = fixture\n"
        f"tables.suffix_list = {tmp_path / 'suffixes.dat'}\n"
        f"tables.feeds = {tmp_path / 'feeds.csv'}\n"
        f"tables.sizes = {tmp_path / 'sizes.csv'}\n"
    )
    return tmp_path


def run(workspace, *argv):
    return main(["--config", str(workspace / "run.conf"), *argv])


def test_full_offline_pipeline(workspace):
    assert run(workspace, "ingest") == EXIT_OK
    data_dir = workspace / "run"
    assert (data_dir / "events.jsonl").exists()
    assert (data_dir / "feed_summary.csv").exists()
    assert run(workspace, "classify") == EXIT_OK
    assert run(workspace, "reputation") == EXIT_OK
    assert run(workspace, "report", "--table", "tld-rates",
               "--abuse", "phishing") == EXIT_OK
    assert (data_dir / "reports" / "tld_rates.csv").exists()
    assert (data_dir / "reports" / "tld_rates.png").exists()
    assert run(workspace, "report", "--table", "mal-vs-comp") == EXIT_OK
    report = (data_dir / "reports" / "mal_vs_comp.csv").read_text()
    assert "phishing" in report


def test_verdicts_content(workspace):
    run(workspace, "ingest")
    run(workspace, "classify")
    rows = [json.loads(l) for l in
            (workspace / "run" / "verdicts.jsonl").read_text().splitlines()]
    by_domain = {r["domain"]: r for r in rows}
    assert by_domain["wells-fargo-login-security.work"]["label"] == \
        "maliciously_registered"
    assert "brand_match" in by_domain["wells-fargo-login-security.work"]["fired_rules"]
    assert by_domain["old-blog.net"]["label"] == "compromised"
    assert by_domain["000webhostapp.com"]["label"] == "excluded"
    assert by_domain["bulk-mailer.com"]["label"] == "maliciously_registered"


def test_pipeline_is_deterministic_byte_for_byte(workspace):
    def run_all(out_name):
        run(workspace, "ingest")
        run(workspace, "classify")
        run(workspace, "reputation")
        run(workspace, "report", "--table", "tld-rates", "--out",
            str(workspace / out_name))
        run(workspace, "report", "--table", "mal-vs-comp", "--out",
            str(workspace / out_name))
        run(workspace, "report", "--table", "special-providers", "--out",
            str(workspace / out_name))

    run_all("first")
    run_all("second")
    for name in ("tld_rates.csv", "mal_vs_comp.csv", "special_providers.csv"):
        first = (workspace / "first" / name).read_bytes()
        second = (workspace / "second" / name).read_bytes()
        assert first == second, name


def test_missing_upstream_artifact_names_producer(workspace, capsys):
    code = run(workspace, "report", "--table", "tld-rates")
    assert code == EXIT_INPUT
    assert "reputation" in capsys.readouterr().err


def test_classify_requires_registrations_or_flag(workspace):
    run(workspace, "ingest")
    (workspace / "run" / "registrations.jsonl").unlink()
    assert run(workspace, "classify") == EXIT_INPUT
    assert run(workspace, "classify", "--allow-missing-registrations") == EXIT_OK


def test_usage_error_exit_code():
    assert main(["no-such-command"]) == EXIT_USAGE


def test_lock_file_blocks_concurrent_use(workspace):
    data_dir = workspace / "run"
    (data_dir / ".lock").write_text("12345")
    assert run(workspace, "ingest") == EXIT_INPUT
    (data_dir / ".lock").unlink()
    assert run(workspace, "ingest") == EXIT_OK
    assert not (data_dir / ".lock").exists()  # released afterwards


def test_live_mode_requires_acknowledgment(workspace):
    conf = workspace / "live.conf"
    conf.write_text("mode = live\n")
    assert main(["--config", str(conf), "ingest"]) == EXIT_INPUT


def test_manifest_written_with_config_hash(workspace):
    run(workspace, "ingest")
    manifest = json.loads((workspace / "run" / "manifest_ingest.json").read_text())
    assert manifest["command"] == "ingest"
    assert manifest["config_hash"]
    assert manifest["counts"]["events"] == 7
    assert any(path.endswith("events.jsonl") for path in manifest["outputs"])


def test_resolver_scan_budget_exhaustion(workspace, tmp_path):
    targets = tmp_path / "targets.txt"
    targets.write_text("127.0.0.1:1\n127.0.0.1:2\n127.0.0.1:3\n")
    code = run(workspace, "resolver-scan", "--targets", str(targets),
               "--expected-ip", "192.0.2.1", "--max-probes", "2")
    assert code == EXIT_BUDGET


def test_uptime_and_survival_reports_with_fixtures(workspace):
    from dnsabuse import dnswire
    from dnsabuse.fixtures import DnsFixtureServer, HttpFixtureServer, Zone

    zone = Zone()
    zone.add(dnswire.Record.a("alive.example.", "127.0.0.1"))
    urls = workspace / "urls.csv"
    urls.write_text("url,blacklisted_at\n"
                    "http://alive.example/page,2021-05-01T00:00:00\n"
                    "http://dead.example/x,2021-05-01T00:05:00\n")
    with DnsFixtureServer(zone) as dns_srv, \
            HttpFixtureServer({"/page": (200, b"up"), "/x": (404, b"gone")}) as http_srv:
        conf = workspace / "fixture.conf"
        conf.write_text(
            f"data_dir = {workspace / 'run'}\n"
            "mode = fixture\n"
            f"resolver.host = {dns_srv.address[0]}\n"
            f"resolver.port = {dns_srv.port}\n"
            "resolver.timeout = 0.5\n"
            f"tables.suffix_list = {workspace / 'suffixes.dat'}\n"
        )
        code = main(["--config", str(conf), "uptime", "--urls", str(urls),
                     "--virtual-clock",
                     "--http-base", f"http://127.0.0.1:{http_srv.port}"])
        assert code == EXIT_OK
        assert main(["--config", str(conf), "report", "--table",
                     "survival"]) == EXIT_OK
        assert main(["--config", str(conf), "report", "--table",
                     "uptime-summary"]) == EXIT_OK
    out = workspace / "run" / "reports"
    assert (out / "survival.csv").exists()
    assert (out / "survival.png").exists()
    assert (out / "uptime_summary.csv").exists()
    lines = (out / "survival.csv").read_text().splitlines()
    assert lines[0] == "t_seconds,survival"
    assert len(lines) > 1


def test_posture_and_contacts_commands_with_fixtures(workspace):
    from dnsabuse import dnswire
    from dnsabuse.fixtures import (
        DnsFixtureServer,
        SignedHierarchy,
        SmtpFixtureServer,
        Zone,
    )
    from tests.conftest import NOW

    hierarchy = SignedHierarchy(tld="test", now=NOW)
    good = hierarchy.add_domain("good")
    hierarchy.zone.add(dnswire.Record.txt(good, "v=spf1 -all"))
    hierarchy.zone.add(dnswire.Record.txt(f"_dmarc.{good}", "v=DMARC1; p=reject"))
    hierarchy.zone.add(dnswire.Record.mx(good, 10, f"mx.{good}"))

    anchor = hierarchy.trust_anchor
    anchor_file = workspace / "anchor.json"
    anchor_file.write_text(json.dumps({
        "name": anchor.name, "rdata_hex": anchor.rdata.hex()}))
    domains_file = workspace / "domains.txt"
    domains_file.write_text(good.rstrip(".") + "\n")

    with DnsFixtureServer(hierarchy.zone) as dns_srv, \
            SmtpFixtureServer.accepting("abuse") as smtp_srv:
        conf = workspace / "posture.conf"
        conf.write_text(
            f"data_dir = {workspace / 'run'}\n"
            "mode = fixture\n"
            f"resolver.host = {dns_srv.address[0]}\n"
            f"resolver.port = {dns_srv.port}\n"
            "resolver.timeout = 0.5\n"
            f"tables.suffix_list = {workspace / 'suffixes.dat'}\n"
        )
        assert main(["--config", str(conf), "posture", "--domains",
                     str(domains_file), "--trust-anchor", str(anchor_file),
                     "--now", str(NOW)]) == EXIT_OK
        smtp_map = workspace / "smtp_map.csv"
        smtp_map.write_text(f"mx.good.test,127.0.0.1,{smtp_srv.port}\n")
        assert main(["--config", str(conf), "contacts", "--domains",
                     str(domains_file), "--smtp-map", str(smtp_map)]) == EXIT_OK
        for table in ("dnssec-summary", "spf-summary", "dmarc-summary",
                      "contacts-summary"):
            assert main(["--config", str(conf), "report", "--table",
                         table]) == EXIT_OK

    run_dir = workspace / "run"
    dnssec_row = json.loads((run_dir / "dnssec.jsonl").read_text().splitlines()[0])
    assert dnssec_row["category"] == "correctly_signed"
    spf_row = json.loads((run_dir / "spf.jsonl").read_text().splitlines()[0])
    assert spf_row["result"] == "fail"
    dmarc_row = json.loads((run_dir / "dmarc.jsonl").read_text().splitlines()[0])
    assert dmarc_row["p_tag"] == "reject"
    contacts_row = json.loads((run_dir / "contacts.jsonl").read_text().splitlines()[0])
    assert contacts_row["rfc_side"] == "contact_found"
    assert contacts_row["rfc_valid_aliases"] == ["abuse"]


def test_resolver_scan_and_report_tables(workspace, tmp_path):
    from dnsabuse import dnswire
    from dnsabuse.fixtures import DnsFixtureServer

    def busy(query):
        response = dnswire.make_response(query)
        response.answers = [dnswire.Record.a(query.question[0], "198.51.100.7")]
        return response

    (tmp_path / "ip2asn.tsv").write_text("127.0.0.0/8\t64999\tLOOPBACK-LAB\n")
    (tmp_path / "ip2cc.tsv").write_text("127.0.0.0/8\tPL\n")
    (tmp_path / "optout.txt").write_text("192.0.2.0/24\n")
    targets = tmp_path / "targets.txt"

    with DnsFixtureServer(behavior=busy, host="0.0.0.0") as server:
        targets.write_text(f"127.0.0.1:{server.port}\n"
                           f"127.0.0.2:{server.port}\n"
                           "192.0.2.55\n")  # opted out, must never be probed
        conf = workspace / "scan.conf"
        conf.write_text(
            f"data_dir = {workspace / 'run'}\n"
            "resolver.timeout = 0.5\n"
            f"tables.suffix_list = {workspace / 'suffixes.dat'}\n"
            f"tables.sizes = {workspace / 'sizes.csv'}\n"
            f"tables.ip2asn = {tmp_path / 'ip2asn.tsv'}\n"
            f"tables.ip2country = {tmp_path / 'ip2cc.tsv'}\n"
        )
        assert main(["--config", str(conf), "resolver-scan",
                     "--targets", str(targets),
                     "--expected-ip", "198.51.100.7",
                     "--opt-out", str(tmp_path / "optout.txt")]) == EXIT_OK
        assert main(["--config", str(conf), "report", "--table",
                     "resolver"]) == EXIT_OK

    rows = [json.loads(l) for l in
            (workspace / "run" / "resolvers.jsonl").read_text().splitlines()]
    assert len(rows) == 2  # the opted-out target never got probed
    assert all(r["status"] == "open_correct" for r in rows)
    manifest = json.loads(
        (workspace / "run" / "manifest_resolver_scan.json").read_text())
    assert manifest["counts"]["opted_out"] == 1
    as_table = (workspace / "run" / "reports" / "resolver_as.csv").read_text()
    assert "64999,LOOPBACK-LAB,2" in as_table
    region_table = (workspace / "run" / "reports" / "resolver_region.csv").read_text()
    assert "European Union,100.0" in region_table


def test_targeted_brands_report(workspace, tmp_path):
    run(workspace, "ingest")
    aliases = tmp_path / "brand_aliases.csv"
    aliases.write_text("wells fargo,Wells Fargo & Co\npaypal,PayPal Inc\n")
    conf_text = (workspace / "run.conf").read_text()
    (workspace / "run.conf").write_text(
        conf_text + f"tables.brand_aliases = {aliases}\n")
    assert run(workspace, "report", "--table", "targeted-brands") == EXIT_OK
    table = (workspace / "run" / "reports" / "targeted_brands.csv").read_text()
    # two PayPal reports fold into one row via the alias map
    assert "PayPal Inc,2" in table
    assert "Wells Fargo & Co,1" in table
    assert (workspace / "run" / "reports" / "targeted_brands.png").exists()
