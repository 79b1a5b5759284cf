"""Command-line front end.

Each subcommand wraps one pipeline stage, writes its outputs under the
run's data directory and records a manifest (inputs, config hash,
counts) so downstream stages can check their dependencies. One command
at a time per data directory, enforced with a lock file.

Exit codes: 0 success, 1 usage, 2 input error, 3 network budget
exhausted.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import os
import sys
from collections import Counter
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__, dnswire, reports, storage
from .classify import (
    ClassifierConfig,
    CohortIndex,
    classify,
    generate_variants,
    load_brand_list,
    load_confusables,
)
from .config import ConfigError, RunConfig
from .contacts import AssessOptions, SmtpProber, assess
from .domains import load_suffix_set, load_suffix_rules, load_tld_groups
from .feeds import (
    AbuseType,
    EntryType,
    FeedDescriptor,
    dedupe_events,
    ingest,
    parse_timestamp,
    summarize,
    window,
)
from .nettables import load_country_regions, load_ip2asn, load_ip2country
from .posture import (
    aggregate_resolvers,
    evaluate_dmarc,
    load_key_policy,
    make_probe_domain,
    probe_resolver,
    scan_dnssec_posture,
)
from .registration import RegistrarDirectory
from .reputation import (
    SizeTable,
    build_rows,
    occurrence_by_registrar,
    occurrence_by_tld,
    rank_special_providers,
)
from .resolver import StubResolver
from .spf import evaluate_spf
from .storage import append_jsonl, read_jsonl
from .uptime import (
    DnsProbe,
    HttpProbe,
    Probes,
    RealClock,
    VirtualClock,
    detect_takedown,
    run_tracker,
    summarize as summarize_uptimes,
    survival,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3


class InputError(Exception):
    pass


class BudgetExhausted(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


@contextlib.contextmanager
def data_dir_lock(data_dir: Path):
    data_dir.mkdir(parents=True, exist_ok=True)
    lock_path = data_dir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InputError(f"{lock_path} exists: another command is running "
                         "in this data_dir (remove the file if it is stale)")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock_path.unlink()


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(cfg: RunConfig, command: str, inputs: List[Path],
                   outputs: List[Path], counts: Dict[str, int],
                   started: datetime) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs if Path(p).exists()},
        "counts": counts,
        "started_at": started.isoformat(),
        "finished_at": datetime.utcnow().isoformat(),
    }
    path = cfg.data_dir / f"manifest_{command.replace('-', '_')}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def require_artifact(path: Path, producer: str) -> Path:
    if not Path(path).exists():
        raise InputError(f"missing {path}; run `dnsabuse {producer}` first")
    return Path(path)


class ProbeBudget:
    """Hard cap on outbound probes for one command invocation."""

    def __init__(self, limit: Optional[int]):
        self.limit = limit
        self.used = 0

    def spend(self, n: int = 1) -> None:
        self.used += n
        if self.limit is not None and self.used > self.limit:
            raise BudgetExhausted(f"probe budget of {self.limit} exhausted")


# ----------------------------------------------------------------------
# helpers


def _suffix_rules(cfg: RunConfig):
    if "suffix_list" not in cfg.tables:
        raise InputError("tables.suffix_list must point at a public-suffix "
                         "list file")
    return load_suffix_rules(cfg.tables["suffix_list"].read_text(encoding="utf-8"))


def _resolver(cfg: RunConfig, want_dnssec: bool = False) -> StubResolver:
    return StubResolver(server=(cfg.resolver_host, cfg.resolver_port),
                        timeout=cfg.dns_timeout, want_dnssec=want_dnssec)


def _load_feed_manifest(cfg: RunConfig) -> List[tuple]:
    """Feeds manifest CSV: feed_id,group,entry_type,abuse_types,
    period_start,period_end,path[,compromised_hint]."""
    path = cfg.tables.get("feeds")
    if path is None:
        raise InputError("tables.feeds must point at the feeds manifest CSV")
    out = []
    base = Path(path).parent
    with open(path, encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "feed_id":
                continue
            feed = FeedDescriptor(
                feed_id=row[0].strip(),
                group=row[1].strip() or None,
                entry_type=EntryType(row[2].strip()),
                abuse_types=frozenset(AbuseType(t.strip())
                                      for t in row[3].split("|")),
                collection_period=(parse_timestamp(row[4]), parse_timestamp(row[5])),
                compromised_hint=(row[7].strip().lower() == "true"
                                  if len(row) > 7 and row[7].strip() else None),
            )
            feed_path = Path(row[6].strip())
            if not feed_path.is_absolute():
                feed_path = base / feed_path
            out.append((feed, feed_path))
    return out


def _read_lines(path: Path) -> List[str]:
    return [l for l in Path(path).read_text(encoding="utf-8").splitlines()
            if l.strip() and not l.strip().startswith("#")]


# ----------------------------------------------------------------------
# commands


def _attach_tld_groups(events, groups):
    from dataclasses import replace

    from .domains import classify_tld

    for event in events:
        if event.registered_domain is not None:
            group = classify_tld(event.registered_domain.tld, groups)
            event.registered_domain = replace(event.registered_domain,
                                              tld_group=group)
            if event.fqdn is not None:
                event.fqdn = replace(event.fqdn,
                                     registered=event.registered_domain)
    return events


def cmd_ingest(cfg: RunConfig, args) -> int:
    started = datetime.utcnow()
    rules = _suffix_rules(cfg)
    groups = load_tld_groups(cfg.table_text("tld_groups"))
    feeds_and_paths = _load_feed_manifest(cfg)
    all_events, error_rows = [], []
    for feed, path in feeds_and_paths:
        report = ingest(feed, Path(path).read_text(encoding="utf-8").splitlines(),
                        rules)
        _attach_tld_groups(report.events, groups)
        all_events.extend(report.events)
        error_rows.extend([feed.feed_id, lineno, reason]
                          for lineno, reason in report.errors)
    if cfg.window_start and cfg.window_end:
        all_events = window(all_events, (parse_timestamp(cfg.window_start),
                                         parse_timestamp(cfg.window_end)))
    events_path = cfg.data_dir / "events.jsonl"
    events_path.unlink(missing_ok=True)
    append_jsonl(events_path, (storage.event_to_dict(e) for e in all_events))
    errors_path = reports.write_csv(cfg.data_dir / "ingest_errors.csv",
                                    ["feed_id", "line", "reason"], error_rows)
    summary_path = reports.feed_summary_table(
        summarize(all_events, [f for f, _ in feeds_and_paths]),
        cfg.data_dir / "feed_summary.csv")
    write_manifest(cfg, "ingest", [p for _, p in feeds_and_paths],
                   [events_path, errors_path, summary_path],
                   {"events": len(all_events), "errors": len(error_rows)},
                   started)
    print(f"ingested {len(all_events)} events "
          f"({len(error_rows)} malformed lines skipped)")
    return EXIT_OK


def _tld_group_fix(cfg, events):
    groups = load_tld_groups(cfg.table_text("tld_groups"))
    return _attach_tld_groups(events, groups)


def cmd_classify(cfg: RunConfig, args) -> int:
    started = datetime.utcnow()
    events_path = require_artifact(cfg.data_dir / "events.jsonl", "ingest")
    events = dedupe_events([storage.event_from_dict(d)
                            for d in read_jsonl(events_path)])
    registrations_path = Path(args.registrations) if args.registrations \
        else cfg.data_dir / "registrations.jsonl"
    registrations = {}
    if registrations_path.exists():
        for data in read_jsonl(registrations_path):
            record = storage.registration_from_dict(data)
            registrations[record.domain] = record
    elif not args.allow_missing_registrations:
        raise InputError(f"missing {registrations_path}; provide "
                         "--registrations or pass "
                         "--allow-missing-registrations to classify "
                         "without registration data")
    lexicon = generate_variants(
        load_brand_list(cfg.table_text("brand_list").splitlines()),
        load_confusables(cfg.table_text("confusables").splitlines()))
    providers = load_suffix_set(cfg.table_text("free_providers").splitlines())
    cohort = CohortIndex.build(registrations.values())
    clf_config = ClassifierConfig(age_days=cfg.age_days)
    verdicts = []
    skipped_no_domain = 0
    for event in events:
        if event.registered_domain is None:
            skipped_no_domain += 1  # IP-only entries have nothing to label
            continue
        domain = event.registered_domain.name
        verdicts.append(classify(event, registrations.get(domain), cohort,
                                 lexicon, providers, clf_config))
    out_path = cfg.data_dir / "verdicts.jsonl"
    out_path.unlink(missing_ok=True)
    append_jsonl(out_path, (storage.verdict_to_dict(v) for v in verdicts))
    counts = Counter(v.label.value for v in verdicts)
    counts["skipped_no_domain"] = skipped_no_domain
    write_manifest(cfg, "classify", [events_path, registrations_path],
                   [out_path], dict(counts), started)
    print("classified:", ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
          or "nothing to classify")
    return EXIT_OK


def cmd_reputation(cfg: RunConfig, args) -> int:
    started = datetime.utcnow()
    events_path = require_artifact(cfg.data_dir / "events.jsonl", "ingest")
    events = _tld_group_fix(cfg, dedupe_events(
        [storage.event_from_dict(d) for d in read_jsonl(events_path)]))
    sizes = SizeTable.from_csv(_read_lines(cfg.tables["sizes"])) \
        if "sizes" in cfg.tables else SizeTable()
    tld_rows = build_rows(occurrence_by_tld(events), sizes)
    out_tld = cfg.data_dir / "reputation_tld.jsonl"
    out_tld.unlink(missing_ok=True)
    append_jsonl(out_tld, ({
        "entity": r.entity_key,
        "abuse_type": r.abuse_type.value if r.abuse_type else None,
        "occurrence": r.occurrence, "size": r.size,
    } for r in tld_rows))
    outputs = [out_tld]
    counts = {"tld_rows": len(tld_rows)}

    verdicts_path = cfg.data_dir / "verdicts.jsonl"
    if verdicts_path.exists():
        verdicts = [storage.verdict_from_dict(d) for d in read_jsonl(verdicts_path)]
        registrar_of: Dict[str, str] = {}
        registrations_path = cfg.data_dir / "registrations.jsonl"
        if registrations_path.exists() and "registrar_directory" in cfg.tables:
            directory = RegistrarDirectory.from_csv(
                _read_lines(cfg.tables["registrar_directory"]),
                _read_lines(cfg.tables["registrar_aliases"])
                if "registrar_aliases" in cfg.tables else ())
            from .registration import identify_registrar

            for data in read_jsonl(registrations_path):
                record = storage.registration_from_dict(data)
                identity = identify_registrar(record, directory)
                registrar_of[record.domain] = identity.canonical_name
        registrar_rows = build_rows(
            occurrence_by_registrar(verdicts, registrar_of), sizes)
        out_registrar = cfg.data_dir / "reputation_registrar.jsonl"
        out_registrar.unlink(missing_ok=True)
        append_jsonl(out_registrar, ({
            "entity": r.entity_key,
            "abuse_type": r.abuse_type.value if r.abuse_type else None,
            "occurrence": r.occurrence, "size": r.size,
        } for r in registrar_rows))
        outputs.append(out_registrar)
        counts["registrar_rows"] = len(registrar_rows)

    providers = load_suffix_set(cfg.table_text("free_providers").splitlines())
    provider_rows = rank_special_providers(events, providers)
    out_providers = cfg.data_dir / "providers.jsonl"
    out_providers.unlink(missing_ok=True)
    append_jsonl(out_providers, provider_rows)
    outputs.append(out_providers)
    counts["provider_rows"] = len(provider_rows)

    write_manifest(cfg, "reputation", [events_path], outputs, counts, started)
    print("reputation rows:", ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return EXIT_OK


def cmd_posture(cfg: RunConfig, args) -> int:
    started = datetime.utcnow()
    domains = _read_lines(Path(args.domains))
    budget = ProbeBudget(args.max_probes)
    resolver = _resolver(cfg)
    policy = load_key_policy(cfg.table_text("algorithm_policy").splitlines())
    trust_anchor = None
    if args.trust_anchor:
        import base64

        raw = json.loads(Path(args.trust_anchor).read_text(encoding="utf-8"))
        trust_anchor = dnswire.Record(
            raw["name"], dnswire.DS, dnswire.CLASS_IN, 0,
            base64.b16decode(raw["rdata_hex"].upper()))
    now = int(args.now) if args.now else None
    dnssec_out, spf_out, dmarc_out = [], [], []
    probe_identity = (args.client_ip, args.helo, f"postmaster@{args.helo}")
    for domain in domains:
        budget.spend(3)
        posture = scan_dnssec_posture(domain, resolver, trust_anchor, policy,
                                      now=now)
        dnssec_out.append({
            "domain": domain, "responsive": posture.responsive,
            "has_ds": posture.has_ds, "has_dnskey": posture.has_dnskey,
            "has_rrsig": posture.has_rrsig,
            "validation": posture.validation.value,
            "category": posture.category.value if posture.category else None,
            "nsec_present": posture.nsec_present,
            "expired_rrsig_count": posture.expired_rrsig_count,
            "key_findings": [[f.algorithm, f.policy.value, f.key_bits]
                             for f in posture.key_findings],
        })
        outcome = evaluate_spf(domain, probe_identity, resolver)
        spf_out.append({
            "domain": domain, "fetch_status": outcome.fetch_status.value,
            "result": outcome.result.value if outcome.result else None,
            "lookup_count": outcome.lookup_count,
            "void_lookup_count": outcome.void_lookup_count,
            "error_detail": outcome.error_detail,
        })
        dmarc = evaluate_dmarc(domain, resolver)
        dmarc_out.append({
            "domain": domain, "present": dmarc.present,
            "p_tag": dmarc.p_tag.value if dmarc.p_tag else None,
            "raw": dmarc.raw, "error_detail": dmarc.error_detail,
        })
    outputs = []
    for name, rows in (("dnssec.jsonl", dnssec_out), ("spf.jsonl", spf_out),
                       ("dmarc.jsonl", dmarc_out)):
        path = cfg.data_dir / name
        path.unlink(missing_ok=True)
        append_jsonl(path, rows)
        outputs.append(path)
    write_manifest(cfg, "posture", [Path(args.domains)], outputs,
                   {"domains": len(domains)}, started)
    print(f"scanned {len(domains)} domains (dnssec, spf, dmarc)")
    return EXIT_OK


def cmd_resolver_scan(cfg: RunConfig, args) -> int:
    from .ratelimit import OptOutList, PerKeyRateLimiter, network_key

    started = datetime.utcnow()
    budget = ProbeBudget(args.max_probes)
    opt_out = OptOutList.from_lines(_read_lines(Path(args.opt_out))) \
        if args.opt_out else OptOutList()
    limiter = PerKeyRateLimiter(cfg.rate_limit_per_host)
    results = []
    skipped = 0
    for line in _read_lines(Path(args.targets)):
        host, _, port = line.partition(":")
        target = (host, int(port)) if port else host
        if opt_out.excluded(host):
            skipped += 1
            continue
        budget.spend()
        limiter.acquire(network_key(host))
        probe_domain = make_probe_domain(host, args.scan_id, args.probe_zone)
        results.append(probe_resolver(target, probe_domain, args.expected_ip,
                                      timeout=cfg.dns_timeout))
    out_path = cfg.data_dir / "resolvers.jsonl"
    out_path.unlink(missing_ok=True)
    append_jsonl(out_path, ({"target_ip": r.target_ip, "status": r.status.value}
                            for r in results))
    counts = Counter(r.status.value for r in results)
    counts["opted_out"] = skipped
    write_manifest(cfg, "resolver-scan", [Path(args.targets)], [out_path],
                   dict(counts), started)
    print("resolver scan:", ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return EXIT_OK


def cmd_contacts(cfg: RunConfig, args) -> int:
    started = datetime.utcnow()
    domains = _read_lines(Path(args.domains))
    resolver = _resolver(cfg)
    endpoint_map = {}
    if args.smtp_map:
        for row in csv.reader(_read_lines(Path(args.smtp_map))):
            endpoint_map[row[0].strip().lower()] = (row[1].strip(), int(row[2]))

    def endpoint_for(mail_host: str):
        return endpoint_map.get(mail_host.lower(), (mail_host, cfg.smtp_port))

    prober = SmtpProber(helo=args.helo, sender=args.sender,
                        endpoint_for=endpoint_for)
    options = AssessOptions(fast=args.fast)
    out_rows = []
    for domain in domains:
        report = assess(domain, resolver, prober, options)
        out_rows.append({
            "domain": domain, "rfc_side": report.rfc_side.value,
            "rfc_valid_aliases": sorted(report.rfc_valid_aliases),
            "soa_side": report.soa_side.value,
            "soa_contact": report.soa_contact,
        })
    out_path = cfg.data_dir / "contacts.jsonl"
    out_path.unlink(missing_ok=True)
    append_jsonl(out_path, out_rows)
    write_manifest(cfg, "contacts", [Path(args.domains)], [out_path],
                   {"domains": len(domains)}, started)
    print(f"assessed {len(domains)} domains")
    return EXIT_OK


def cmd_uptime(cfg: RunConfig, args) -> int:
    started = datetime.utcnow()
    blacklistings = []
    for row in csv.reader(_read_lines(Path(args.urls))):
        if row[0] == "url":
            continue
        blacklistings.append((row[0].strip(), parse_timestamp(row[1])))
    if not blacklistings:
        raise InputError(f"no URLs in {args.urls}")
    resolver = _resolver(cfg)
    rewrite = None
    if args.http_base:
        base = args.http_base.rstrip("/")

        def rewrite(url: str, _base=base) -> str:
            from urllib.parse import urlsplit

            parts = urlsplit(url if "://" in url else f"http://{url}")
            return f"{_base}{parts.path or '/'}"

    whois_probe = None
    if "endpoints" in cfg.tables:
        from .registration import RegistrationClient, load_endpoint_map
        from .uptime import RegistrationDigestProbe

        client = RegistrationClient(
            load_endpoint_map(_read_lines(cfg.tables["endpoints"])),
            timeout=cfg.http_timeout)
        whois_probe = RegistrationDigestProbe(client)
    probes = Probes(dns=DnsProbe(resolver),
                    http=HttpProbe(timeout=cfg.http_timeout, url_rewrite=rewrite),
                    whois=whois_probe)
    clock = VirtualClock(min(at for _, at in blacklistings)) if args.virtual_clock \
        else RealClock()
    store = storage.SnapshotStore(cfg.data_dir / "snapshots.jsonl")
    Path(store.path).unlink(missing_ok=True)
    series_list = run_tracker(blacklistings, probes, clock, store.append)
    outcomes = [detect_takedown(s) for s in series_list]
    censored = sum(1 for _, c in outcomes if c)
    write_manifest(cfg, "uptime", [Path(args.urls)], [store.path],
                   {"urls": len(series_list), "censored": censored}, started)
    print(f"tracked {len(series_list)} URLs; {censored} censored at horizon")
    return EXIT_OK


_REPORT_TABLES = ("tld-rates", "tld-occurrence", "registrar-rates",
                  "mal-vs-comp", "special-providers", "survival",
                  "uptime-summary", "contacts-summary", "alias-usage",
                  "spf-summary", "dmarc-summary", "dnssec-summary",
                  "resolver", "targeted-brands", "feed-summary")


def cmd_report(cfg: RunConfig, args) -> int:
    started = datetime.utcnow()
    out_dir = Path(args.out) if args.out else cfg.data_dir / "reports"
    table = args.table
    abuse = AbuseType(args.abuse) if args.abuse else None
    produced: List[Path] = []

    def rep_rows(path):
        from .reputation import ReputationRow

        rows = []
        for data in read_jsonl(path):
            rows.append(ReputationRow(
                entity_key=data["entity"],
                abuse_type=AbuseType(data["abuse_type"]) if data["abuse_type"] else None,
                occurrence=data["occurrence"], size=data["size"],
                rate=None))
        from .reputation import rate as rate_fn, UndefinedRateError

        for row in rows:
            if row.size:
                try:
                    row.rate = rate_fn(row.occurrence, row.size)
                except UndefinedRateError:
                    row.rate = None
        return rows

    if table in ("tld-rates", "tld-occurrence"):
        path = require_artifact(cfg.data_dir / "reputation_tld.jsonl", "reputation")
        rows = rep_rows(path)
        if table == "tld-rates":
            produced.append(reports.rates_table(
                rows, out_dir / "tld_rates.csv", bucket=args.bucket,
                abuse=abuse, top=args.top, decimals=args.decimals,
                out_figure=out_dir / "tld_rates.png",
                figure_title="TLD abuse rate"))
        else:
            produced.append(reports.occurrence_table(
                rows, out_dir / "tld_occurrence.csv", abuse=abuse, top=args.top))
    elif table == "registrar-rates":
        path = require_artifact(cfg.data_dir / "reputation_registrar.jsonl",
                                "reputation")
        produced.append(reports.rates_table(
            rep_rows(path), out_dir / "registrar_rates.csv", bucket=args.bucket,
            abuse=abuse, top=args.top, decimals=args.decimals,
            out_figure=out_dir / "registrar_rates.png",
            figure_title="registrar abuse rate"))
    elif table == "mal-vs-comp":
        path = require_artifact(cfg.data_dir / "verdicts.jsonl", "classify")
        verdicts = [storage.verdict_from_dict(d) for d in read_jsonl(path)]
        produced.append(reports.malicious_vs_compromised_table(
            verdicts, out_dir / "mal_vs_comp.csv",
            out_figure=out_dir / "mal_vs_comp.png"))
    elif table == "special-providers":
        path = require_artifact(cfg.data_dir / "providers.jsonl", "reputation")
        produced.append(reports.special_providers_table(
            list(read_jsonl(path)), out_dir / "special_providers.csv"))
    elif table == "survival":
        path = require_artifact(cfg.data_dir / "snapshots.jsonl", "uptime")
        series = storage.SnapshotStore(path).load_series()
        curve = survival(series)
        produced.append(reports.survival_table(
            curve, out_dir / "survival.csv", out_figure=out_dir / "survival.png"))
    elif table == "uptime-summary":
        path = require_artifact(cfg.data_dir / "snapshots.jsonl", "uptime")
        series = storage.SnapshotStore(path).load_series()
        outcomes = [detect_takedown(s) for s in series]
        produced.append(reports.uptime_summary_table(
            {"(all)": summarize_uptimes(outcomes)},
            out_dir / "uptime_summary.csv",
            outcomes_by_key={"(all)": outcomes},
            out_figure=out_dir / "uptime_histogram.png"))
    elif table == "contacts-summary":
        path = require_artifact(cfg.data_dir / "contacts.jsonl", "contacts")
        from .contacts import ReachabilityReport, RfcSide, SoaSide

        rows = [ReachabilityReport(
            domain=d["domain"], rfc_side=RfcSide(d["rfc_side"]),
            rfc_valid_aliases=frozenset(d["rfc_valid_aliases"]),
            soa_side=SoaSide(d["soa_side"]), soa_contact=d["soa_contact"])
            for d in read_jsonl(path)]
        produced.append(reports.contacts_summary_table(
            rows, out_dir / "contacts_summary.csv",
            out_figure=out_dir / "contacts_summary.png"))
        produced.append(reports.alias_usage_table(
            rows, out_dir / "alias_usage.csv"))
    elif table == "alias-usage":
        path = require_artifact(cfg.data_dir / "contacts.jsonl", "contacts")
        from .contacts import ReachabilityReport, RfcSide, SoaSide

        rows = [ReachabilityReport(
            domain=d["domain"], rfc_side=RfcSide(d["rfc_side"]),
            rfc_valid_aliases=frozenset(d["rfc_valid_aliases"]),
            soa_side=SoaSide(d["soa_side"]), soa_contact=d["soa_contact"])
            for d in read_jsonl(path)]
        produced.append(reports.alias_usage_table(rows, out_dir / "alias_usage.csv"))
    elif table == "spf-summary":
        path = require_artifact(cfg.data_dir / "spf.jsonl", "posture")
        from .spf import SpfFetchStatus, SpfOutcome, SpfResult

        rows = [SpfOutcome(
            domain=d["domain"], fetch_status=SpfFetchStatus(d["fetch_status"]),
            result=SpfResult(d["result"]) if d["result"] else None,
            lookup_count=d["lookup_count"],
            void_lookup_count=d["void_lookup_count"],
            error_detail=d["error_detail"]) for d in read_jsonl(path)]
        produced.append(reports.spf_summary_table(rows, out_dir / "spf_summary.csv"))
    elif table == "dmarc-summary":
        path = require_artifact(cfg.data_dir / "dmarc.jsonl", "posture")
        from .posture import DmarcPolicy, DmarcTag

        rows = [DmarcPolicy(
            domain=d["domain"], present=d["present"],
            p_tag=DmarcTag(d["p_tag"]) if d["p_tag"] else None,
            raw=d.get("raw"), error_detail=d.get("error_detail"))
            for d in read_jsonl(path)]
        produced.append(reports.dmarc_summary_table(rows, out_dir / "dmarc_summary.csv"))
    elif table == "dnssec-summary":
        path = require_artifact(cfg.data_dir / "dnssec.jsonl", "posture")
        from .posture import (
            DnssecCategory,
            DnssecPosture,
            KeyFinding,
            KeyPolicy,
            Validation,
        )

        rows = [DnssecPosture(
            domain=d["domain"], responsive=d["responsive"], has_ds=d["has_ds"],
            has_dnskey=d["has_dnskey"], has_rrsig=d["has_rrsig"],
            validation=Validation(d["validation"]),
            category=DnssecCategory(d["category"]) if d["category"] else None,
            nsec_present=d["nsec_present"],
            expired_rrsig_count=d["expired_rrsig_count"],
            key_findings=[KeyFinding(algorithm=f[0], policy=KeyPolicy(f[1]),
                                     key_bits=f[2])
                          for f in d.get("key_findings", ())])
            for d in read_jsonl(path)]
        floor = int(cfg.raw.get("dnssec.key_size_floor", 2048))
        produced.append(reports.dnssec_summary_table(
            rows, out_dir / "dnssec_summary.csv", key_size_floor=floor))
    elif table == "resolver":
        path = require_artifact(cfg.data_dir / "resolvers.jsonl", "resolver-scan")
        from .posture import ProbeStatus, ResolverProbeResult

        results = [ResolverProbeResult(target_ip=d["target_ip"],
                                       status=ProbeStatus(d["status"]))
                   for d in read_jsonl(path)]
        ip2asn = load_ip2asn(_read_lines(cfg.tables["ip2asn"])) \
            if "ip2asn" in cfg.tables else load_ip2asn([])
        ip2country = load_ip2country(_read_lines(cfg.tables["ip2country"])) \
            if "ip2country" in cfg.tables else load_ip2country([])
        as_sizes = {}
        if "sizes" in cfg.tables:
            for line in _read_lines(cfg.tables["sizes"]):
                row = next(csv.reader([line]))
                if row[0].startswith("as:"):
                    as_sizes[int(row[0][3:])] = int(row[1])
        regions = load_country_regions(cfg.table_text("regions").splitlines())
        aggregates = aggregate_resolvers(results, ip2asn, ip2country,
                                         as_sizes, regions)
        produced.extend(reports.resolver_tables(aggregates, out_dir))
    elif table == "targeted-brands":
        path = require_artifact(cfg.data_dir / "events.jsonl", "ingest")
        brands = Counter()
        for data in read_jsonl(path):
            if data.get("target_brand"):
                brands[data["target_brand"]] += 1
        aliases = {}
        if "brand_aliases" in cfg.tables:
            for row in csv.reader(_read_lines(cfg.tables["brand_aliases"])):
                aliases[row[0].strip().lower()] = row[1].strip()
        produced.append(reports.targeted_brands_table(
            brands, out_dir / "targeted_brands.csv", aliases=aliases,
            out_figure=out_dir / "targeted_brands.png"))
    elif table == "feed-summary":
        path = require_artifact(cfg.data_dir / "feed_summary.csv", "ingest")
        produced.append(path)
    else:
        raise InputError(f"unknown table {table!r}; choose from "
                         + ", ".join(_REPORT_TABLES))
    write_manifest(cfg, f"report-{table}", [], produced,
                   {"files": len(produced)}, started)
    for path in produced:
        print(path)
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="dnsabuse",
                     description="DNS abuse measurement toolkit")
    parser.add_argument("--config", help="key=value run configuration file")
    parser.add_argument("--data-dir", help="override the run data directory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="parse blacklist feeds into the event store")

    p_classify = sub.add_parser("classify",
                                help="label events malicious/compromised")
    p_classify.add_argument("--registrations",
                            help="registrations JSONL (default: data_dir/registrations.jsonl)")
    p_classify.add_argument("--allow-missing-registrations", action="store_true")

    sub.add_parser("reputation", help="occurrence and rate aggregation")

    p_posture = sub.add_parser("posture", help="DNSSEC/SPF/DMARC scans")
    p_posture.add_argument("--domains", required=True)
    p_posture.add_argument("--trust-anchor",
                           help="JSON file {name, rdata_hex} with the DS-form anchor")
    p_posture.add_argument("--now", help="validation epoch (unix seconds)")
    p_posture.add_argument("--client-ip", default="192.0.2.99")
    p_posture.add_argument("--helo", default="probe.invalid")
    p_posture.add_argument("--max-probes", type=int)

    p_resolver = sub.add_parser("resolver-scan", help="open-resolver probing")
    p_resolver.add_argument("--targets", required=True,
                            help="one ip[:port] per line")
    p_resolver.add_argument("--probe-zone", default="probe.test")
    p_resolver.add_argument("--scan-id", default="scan")
    p_resolver.add_argument("--expected-ip", required=True)
    p_resolver.add_argument("--max-probes", type=int)
    p_resolver.add_argument("--opt-out",
                            help="CIDRs that must never be probed, one per line")

    p_contacts = sub.add_parser("contacts", help="RFC 2142 contact validation")
    p_contacts.add_argument("--domains", required=True)
    p_contacts.add_argument("--smtp-map",
                            help="CSV mail_host,connect_host,port (fixture mode)")
    p_contacts.add_argument("--helo", default="probe.invalid")
    p_contacts.add_argument("--sender", default="prober@probe.invalid")
    p_contacts.add_argument("--fast", action="store_true",
                            help="stop at the first valid alias")

    p_uptime = sub.add_parser("uptime", help="12-snapshot uptime tracking")
    p_uptime.add_argument("--urls", required=True, help="CSV url,blacklisted_at")
    p_uptime.add_argument("--virtual-clock", action="store_true",
                          help="jump between deadlines instead of sleeping")
    p_uptime.add_argument("--http-base",
                          help="rewrite URL host to this base (fixture mode)")

    p_report = sub.add_parser("report", help="render report tables and figures")
    p_report.add_argument("--table", required=True,
                          help=", ".join(_REPORT_TABLES))
    p_report.add_argument("--bucket", help='size bucket, e.g. "(1M,inf)"')
    p_report.add_argument("--abuse", help="spam|phishing|malware|botnet_cc")
    p_report.add_argument("--top", type=int)
    p_report.add_argument("--decimals", action="store_true",
                          help="always render rates with two decimals")
    p_report.add_argument("--out", help="output directory (default data_dir/reports)")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "classify": cmd_classify,
    "reputation": cmd_reputation,
    "posture": cmd_posture,
    "resolver-scan": cmd_resolver_scan,
    "contacts": cmd_contacts,
    "uptime": cmd_uptime,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = RunConfig.load(args.config)
        if args.data_dir:
            cfg.data_dir = Path(args.data_dir)
        with data_dir_lock(cfg.data_dir):
            return _COMMANDS[args.command](cfg, args)
    except (ConfigError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
