"""Report rendering: delimited tables plus matplotlib figures.

Tables mirror the measurement study's shapes (occurrence/rate rankings
per size bucket, malicious-vs-compromised shares, provider rankings,
survival curves, contact-reachability categories). Percentages and rates
are computed from stored counts at render time; nothing pre-rounded is
ever persisted, so re-rendering cannot compound rounding drift.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .classify import ClassificationVerdict, Label
from .contacts import ReachabilityReport, RfcSide, SoaSide
from .feeds import AbuseType, FeedSummary
from .posture import DnssecPosture, DmarcPolicy, ResolverAggregates
from .reputation import ReputationRow, SizeTable, bucket_of, format_rate
from .spf import SpfOutcome
from .uptime import SurvivalCurve, UptimeSummary, offset_histogram


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def _save_figure(fig, path: Optional[Path]) -> Optional[Path]:
    if path is None:
        plt.close(fig)
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def feed_summary_table(rows: Sequence[FeedSummary], out_csv) -> Path:
    return write_csv(
        out_csv,
        ["feed", "is_group", "entries", "entries_with_domains",
         "pct_with_domains", "unique_domains"],
        [[r.feed_id, int(r.is_group), r.total_entries, r.entries_with_domains,
          f"{r.pct_with_domains:.2f}", r.unique_domains] for r in rows],
    )


def rates_table(rows: Sequence[ReputationRow], out_csv,
                sizes: Optional[SizeTable] = None,
                bucket: Optional[str] = None,
                abuse: Optional[AbuseType] = None,
                top: Optional[int] = None,
                decimals: bool = False,
                out_figure=None, figure_title: str = "") -> Path:
    """Occurrence/rate ranking, optionally restricted to one size bucket
    and one abuse type, ordered by rate (occurrence breaks ties)."""
    selected = []
    for row in rows:
        if abuse is not None and row.abuse_type is not abuse:
            continue
        if bucket is not None:
            if row.size is None or row.size <= 0:
                continue
            if bucket_of(row.size) != bucket:
                continue
        selected.append(row)
    selected.sort(key=lambda r: (-(r.rate if r.rate is not None else -1.0),
                                 -r.occurrence, r.entity_key))
    if top:
        selected = selected[:top]
    path = write_csv(
        out_csv,
        ["entity", "abuse_type", "occurrence", "size", "rate"],
        [[r.entity_key, r.abuse_type.value if r.abuse_type else "",
          r.occurrence, r.size if r.size is not None else "",
          format_rate(r.rate, force_decimals=decimals)] for r in selected],
    )
    if out_figure and selected:
        fig, ax = plt.subplots(figsize=(7, max(2.0, 0.35 * len(selected))))
        names = [r.entity_key for r in selected][::-1]
        values = [r.rate or 0.0 for r in selected][::-1]
        ax.barh(names, values, color="#b03030")
        ax.set_xlabel("abused domains per 10,000 registrations")
        ax.set_title(figure_title or "abuse rate")
        _save_figure(fig, Path(out_figure))
    return path


def occurrence_table(rows: Sequence[ReputationRow], out_csv,
                     abuse: Optional[AbuseType] = None,
                     top: Optional[int] = None) -> Path:
    selected = [r for r in rows if abuse is None or r.abuse_type is abuse]
    selected.sort(key=lambda r: (-r.occurrence, r.entity_key))
    if top:
        selected = selected[:top]
    return write_csv(
        out_csv,
        ["entity", "abuse_type", "occurrence"],
        [[r.entity_key, r.abuse_type.value if r.abuse_type else "", r.occurrence]
         for r in selected],
    )


def malicious_vs_compromised_table(verdicts: Sequence[ClassificationVerdict],
                                   out_csv, out_figure=None) -> Path:
    """Per-abuse-type shares of malicious vs compromised registrations;
    excluded domains are reported as a separate column, not silently
    folded into either class."""
    by_type: Dict[str, Counter] = {}
    for verdict in verdicts:
        abuse = verdict.abuse_type.value if verdict.abuse_type else "(unknown)"
        by_type.setdefault(abuse, Counter())[verdict.label] += 1
    rows = []
    for abuse in sorted(by_type):
        counts = by_type[abuse]
        decided = counts[Label.MALICIOUSLY_REGISTERED] + counts[Label.COMPROMISED]
        pct_mal = 100.0 * counts[Label.MALICIOUSLY_REGISTERED] / decided if decided else 0.0
        pct_comp = 100.0 * counts[Label.COMPROMISED] / decided if decided else 0.0
        rows.append([abuse, counts[Label.MALICIOUSLY_REGISTERED],
                     counts[Label.COMPROMISED], counts[Label.EXCLUDED],
                     f"{pct_mal:.2f}", f"{pct_comp:.2f}"])
    path = write_csv(
        out_csv,
        ["abuse_type", "malicious", "compromised", "excluded",
         "pct_malicious", "pct_compromised"],
        rows,
    )
    if out_figure and rows:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        labels = [r[0] for r in rows]
        mal = [float(r[4]) for r in rows]
        comp = [float(r[5]) for r in rows]
        ax.bar(labels, mal, label="maliciously registered", color="#b03030")
        ax.bar(labels, comp, bottom=mal, label="compromised", color="#3060b0")
        ax.set_ylabel("% of classified domains")
        ax.legend(fontsize=8)
        _save_figure(fig, Path(out_figure))
    return path


def special_providers_table(rows: Sequence[dict], out_csv) -> Path:
    return write_csv(out_csv, ["provider", "abuse_type", "fqdn_count"],
                     [[r["provider"], r["abuse_type"], r["fqdn_count"]] for r in rows])


def survival_table(curve: SurvivalCurve, out_csv, out_figure=None,
                   title: str = "survival of blacklisted resources") -> Path:
    path = write_csv(out_csv, ["t_seconds", "survival"],
                     [[f"{t:.0f}", f"{p:.6f}"] for t, p in curve.steps])
    if out_figure:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        times = [t / 86400.0 for t, _ in curve.steps]
        probs = [p for _, p in curve.steps]
        ax.step(times, probs, where="post", color="#b03030")
        ax.set_xlabel("days since blacklisting")
        ax.set_ylabel("survival probability")
        ax.set_ylim(0, 1.05)
        ax.set_title(f"{title} (n={curve.n_subjects}, "
                     f"censored={curve.n_censored})", fontsize=9)
        ax.grid(alpha=0.3)
        _save_figure(fig, Path(out_figure))
    return path


def _format_td(value) -> str:
    total = int(value.total_seconds())
    days, rest = divmod(total, 86400)
    hours, rest = divmod(rest, 3600)
    minutes, seconds = divmod(rest, 60)
    return f"{days} days {hours:02d}:{minutes:02d}:{seconds:02d}"


def uptime_summary_table(summaries: Dict[str, UptimeSummary], out_csv,
                         outcomes_by_key: Optional[dict] = None,
                         out_figure=None) -> Path:
    rows = []
    for key in sorted(summaries):
        s = summaries[key]
        observed = (_format_td(s.mean_observed_only)
                    if s.mean_observed_only is not None else "")
        rows.append([key, s.n, s.n_censored, _format_td(s.mean), observed,
                     _format_td(s.median)])
    path = write_csv(
        out_csv,
        ["entity", "n", "n_censored", "mean_uptime_censored_floor",
         "mean_uptime_observed_only", "median_uptime"],
        rows,
    )
    if out_figure and outcomes_by_key:
        keys = sorted(outcomes_by_key)[:6]
        fig, axes = plt.subplots(len(keys), 1,
                                 figsize=(6.5, 2.2 * len(keys)), squeeze=False)
        for ax, key in zip(axes[:, 0], keys):
            histogram = offset_histogram(outcomes_by_key[key])
            ax.bar([label for label, _ in histogram],
                   [count for _, count in histogram], color="#3060b0")
            ax.set_title(key, fontsize=9)
            ax.tick_params(axis="x", rotation=45, labelsize=7)
        _save_figure(fig, Path(out_figure))
    return path


def contacts_summary_table(reports: Sequence[ReachabilityReport], out_csv,
                           out_figure=None) -> Path:
    """Category percentages shaped like the email-validation results:
    one block for the RFC aliases, one for the SOA contact."""
    n = len(reports) or 1
    rfc_counts = Counter(r.rfc_side for r in reports)
    soa_counts = Counter(r.soa_side for r in reports)
    rows = []
    for side, counts, order in (
        ("rfc", rfc_counts, list(RfcSide)),
        ("soa", soa_counts, list(SoaSide)),
    ):
        for category in order:
            count = counts.get(category, 0)
            rows.append([side, category.value, count, f"{100.0 * count / n:.2f}"])
    path = write_csv(out_csv, ["side", "category", "count", "pct"], rows)
    if out_figure:
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
        for ax, (side, counts, order) in zip(axes, (
            ("RFC aliases", rfc_counts, list(RfcSide)),
            ("SOA contact", soa_counts, list(SoaSide)),
        )):
            labels = [c.value for c in order]
            values = [counts.get(c, 0) for c in order]
            ax.bar(labels, values, color="#3060b0")
            ax.set_title(side, fontsize=9)
            ax.tick_params(axis="x", rotation=45, labelsize=7)
        _save_figure(fig, Path(out_figure))
    return path


def alias_usage_table(reports: Sequence[ReachabilityReport], out_csv) -> Path:
    """Which RFC aliases validated (input to the alias-overlap figure)."""
    counter: Counter = Counter()
    for report in reports:
        for alias in report.rfc_valid_aliases:
            counter[alias] += 1
        if len(report.rfc_valid_aliases) > 1:
            counter["(multiple)"] += 1
    return write_csv(out_csv, ["alias", "domains"],
                     [[alias, counter[alias]] for alias in sorted(counter)])


def spf_summary_table(outcomes: Sequence[SpfOutcome], out_csv) -> Path:
    status_counts = Counter(o.fetch_status.value for o in outcomes)
    result_counts = Counter(o.result.value for o in outcomes if o.result)
    error_counts = Counter(o.error_detail for o in outcomes
                           if o.error_detail and o.result
                           and o.result.value == "permerror")
    rows = [["fetch_status", k, v, ""] for k, v in sorted(status_counts.items())]
    rows += [["result", k, v, ""] for k, v in sorted(result_counts.items())]
    rows += [["permerror_cause", k, v, ""] for k, v in sorted(error_counts.items())]
    return write_csv(out_csv, ["kind", "value", "count", "note"], rows)


def dmarc_summary_table(policies: Sequence[DmarcPolicy], out_csv) -> Path:
    present = [p for p in policies if p.present]
    tag_counts = Counter(p.p_tag.value if p.p_tag else "(unparsed)"
                         for p in present)
    rows = [["present", len(present)], ["absent", len(policies) - len(present)]]
    rows += [[f"p={tag}", count] for tag, count in sorted(tag_counts.items())]
    return write_csv(out_csv, ["category", "count"], rows)


def dnssec_summary_table(postures: Sequence[DnssecPosture], out_csv,
                         key_size_floor: int = 2048) -> Path:
    categories = Counter(p.category.value for p in postures if p.category)
    rows = [["responsive", sum(1 for p in postures if p.responsive)],
            ["non_responsive", sum(1 for p in postures if not p.responsive)]]
    rows += [[category, count] for category, count in sorted(categories.items())]
    rows.append(["nsec_present", sum(1 for p in postures if p.nsec_present)])
    rows.append(["expired_rrsigs", sum(p.expired_rrsig_count for p in postures)])
    policy_counts: Counter = Counter()
    undersized = 0
    for posture in postures:
        for finding in posture.key_findings:
            policy_counts[finding.policy.value] += 1
            # the floor only applies to RSA keys; elliptic-curve sizes
            # are fixed by the algorithm
            if finding.algorithm in (5, 7, 8, 10) and finding.key_bits < key_size_floor:
                undersized += 1
    rows += [[f"keys_{policy}", count]
             for policy, count in sorted(policy_counts.items())]
    rows.append([f"keys_below_{key_size_floor}_bits", undersized])
    return write_csv(out_csv, ["category", "count"], rows)


def resolver_tables(aggregates: ResolverAggregates, out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    paths = [
        write_csv(out_dir / "resolver_as.csv",
                  ["asn", "as_name", "open_correct", "open_empty", "open_bogus",
                   "error_rcode", "closed_or_filtered", "announced_size",
                   "open_ratio_pct"],
                  [[r["asn"], r["as_name"], r["open_correct"], r["open_empty"],
                    r["open_bogus"], r["error_rcode"], r["closed_or_filtered"],
                    r["announced_size"] if r["announced_size"] is not None else "",
                    f"{r['open_ratio_pct']:.2f}" if r["open_ratio_pct"] is not None else ""]
                   for r in aggregates.by_asn]),
        write_csv(out_dir / "resolver_country.csv",
                  ["country", "open_correct"],
                  [[r["country"], r["open_correct"]] for r in aggregates.by_country]),
        write_csv(out_dir / "resolver_region.csv",
                  ["region", "share_pct"],
                  [[r["region"], f"{r['share_pct']:.1f}"] for r in aggregates.by_region]),
    ]
    return paths


def targeted_brands_table(brand_counts: Counter, out_csv,
                          aliases: Optional[Dict[str, str]] = None,
                          top: int = 30, out_figure=None) -> Path:
    """Brand frequency across phishing reports; the alias map folds
    reported variants (``Facebook Inc.`` vs ``Facebook``) together."""
    folded: Counter = Counter()
    for brand, count in brand_counts.items():
        key = brand.strip()
        if aliases:
            key = aliases.get(key.lower(), key)
        folded[key] += count
    ranked = sorted(folded.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    path = write_csv(out_csv, ["brand", "reports"], [[b, c] for b, c in ranked])
    if out_figure and ranked:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.bar([b for b, _ in ranked], [c for _, c in ranked], color="#b03030")
        ax.tick_params(axis="x", rotation=60, labelsize=7)
        ax.set_ylabel("reports")
        _save_figure(fig, Path(out_figure))
    return path
