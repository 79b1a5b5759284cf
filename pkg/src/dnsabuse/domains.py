"""Domain-name primitives: public-suffix matching, registered-domain
extraction and TLD grouping.

Registered domains are the unit every other module aggregates on: the
public suffix plus exactly one label (so ``example.com.pl`` is one
registrable unit when the suffix list carries ``com.pl``).
"""

from __future__ import annotations

import csv
import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional
from urllib.parse import urlsplit


class DomainError(ValueError):
    """Input cannot be interpreted as a domain name."""


class NotADomain(DomainError):
    """Host is an IP literal, not a domain name."""


class NotARegistrableDomain(DomainError):
    """Host equals a public suffix; no registrant exists below it."""


class SuffixListError(ValueError):
    """Malformed suffix-list content; message names the offending line."""


class TldGroup(Enum):
    LEGACY_GTLD = "legacy_gtld"
    NEW_GTLD = "new_gtld"
    EU_CCTLD = "eu_cctld"
    OTHER_EUROPEAN_CCTLD = "other_european_cctld"
    OTHER_CCTLD = "other_cctld"


_ICANN_BEGIN = "===BEGIN ICANN DOMAINS==="
_ICANN_END = "===END ICANN DOMAINS==="


@dataclass(frozen=True)
class SuffixRuleSet:
    """Parsed public-suffix rules (public/ICANN section only).

    Rules are stored as label tuples in name order, e.g. ``("com", "pl")``
    for the rule ``com.pl``; wildcard tuples start with ``"*"`` and
    ``exceptions`` holds the label tuples of ``!`` rules.
    """

    exact: frozenset
    wildcards: frozenset
    exceptions: frozenset
    source_version: str = ""

    def __len__(self) -> int:
        return len(self.exact) + len(self.wildcards) + len(self.exceptions)


@dataclass(frozen=True)
class RegisteredDomain:
    name: str
    public_suffix: str
    tld: str
    tld_group: Optional[TldGroup] = field(default=None, compare=False)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Fqdn:
    name: str
    registered: RegisteredDomain

    def __str__(self) -> str:
        return self.name


def _ascii_label(label: str) -> str:
    """Normalize one label to lowercase punycode."""
    label = label.lower()
    if label.isascii():
        return label
    try:
        return label.encode("idna").decode("ascii")
    except UnicodeError as exc:
        raise DomainError(f"label {label!r} is not IDNA-encodable") from exc


def normalize_host(host: str) -> tuple:
    """Lowercased punycode labels of a host, leading/trailing dots stripped."""
    host = host.strip().rstrip(".")
    if not host:
        raise DomainError("empty host")
    labels = [l for l in host.split(".")]
    if any(not l for l in labels):
        raise DomainError(f"empty label in host {host!r}")
    return tuple(_ascii_label(l) for l in labels)


def load_suffix_rules(text: str, source_version: str = "") -> SuffixRuleSet:
    """Parse public-suffix list content (standard syntax).

    Only the public (ICANN) section is loaded when section markers are
    present; files without markers are taken to be entirely public.
    Raises SuffixListError naming the line on malformed rules.
    """
    exact, wildcards, exceptions = set(), set(), set()
    in_private = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("//"):
            if _ICANN_BEGIN in line:
                in_private = False
            elif _ICANN_END in line:
                in_private = True
            continue
        if not line or in_private:
            continue
        rule = line.split()[0].lower()
        if rule != line.lower():
            raise SuffixListError(f"line {lineno}: embedded whitespace in rule {raw!r}")
        is_exception = rule.startswith("!")
        if is_exception:
            rule = rule[1:]
        if rule.startswith(".") or rule.endswith(".") or not rule:
            raise SuffixListError(f"line {lineno}: malformed rule {raw!r}")
        try:
            labels = normalize_host(rule)
        except DomainError as exc:
            raise SuffixListError(f"line {lineno}: {exc}") from exc
        if is_exception:
            exceptions.add(labels)
        elif "*" in labels:
            if labels[0] != "*" or "*" in labels[1:]:
                raise SuffixListError(
                    f"line {lineno}: wildcard must be the leftmost label: {raw!r}"
                )
            wildcards.add(labels)
        else:
            exact.add(labels)
    return SuffixRuleSet(
        exact=frozenset(exact),
        wildcards=frozenset(wildcards),
        exceptions=frozenset(exceptions),
        source_version=source_version,
    )


def _host_of(text: str) -> str:
    """Extract the host part of a URL, or accept a bare hostname."""
    text = text.strip()
    if "://" in text:
        parts = urlsplit(text)
        if not parts.hostname:
            raise DomainError(f"URL without a host: {text!r}")
        return parts.hostname
    # bare host, possibly with a path or port glued on
    host = text.split("/", 1)[0].split("?", 1)[0]
    if "@" in host:
        host = host.rsplit("@", 1)[1]
    if host.count(":") == 1 and not host.startswith("["):
        maybe_host, maybe_port = host.rsplit(":", 1)
        if maybe_port.isdigit():
            host = maybe_host
    return host.strip("[]")


def _suffix_length(labels: tuple, rules: SuffixRuleSet) -> int:
    """Number of trailing labels forming the public suffix.

    Exception rules beat wildcard rules; otherwise the longest match
    wins; the implicit ``*`` rule makes the last label the default.
    """
    n = len(labels)
    for i in range(n):
        if labels[i:] in rules.exceptions:
            return n - i - 1  # suffix is the exception rule minus its first label
    best = 1  # implicit "*" default rule
    for i in range(n):
        tail = labels[i:]
        if tail in rules.exact:
            best = max(best, n - i)
        if len(tail) >= 2 and ("*",) + tail[1:] in rules.wildcards:
            best = max(best, n - i)
    return best


def extract_registered_domain(
    text: str,
    rules: SuffixRuleSet,
    group_table: Optional[dict] = None,
) -> RegisteredDomain:
    """Registered domain (public suffix + one label) of a URL or hostname.

    Raises NotADomain for IP literals, NotARegistrableDomain when the
    host itself is a public suffix, DomainError for unparsable input.
    Idempotent on its own output.
    """
    host = _host_of(text)
    try:
        ipaddress.ip_address(host)
    except ValueError:
        pass
    else:
        raise NotADomain(f"{host!r} is an IP address")
    labels = normalize_host(host)
    suffix_len = _suffix_length(labels, rules)
    if len(labels) == suffix_len:
        raise NotARegistrableDomain(f"{host!r} is a public suffix")
    reg_labels = labels[-(suffix_len + 1):]
    name = ".".join(reg_labels)
    suffix = ".".join(labels[-suffix_len:])
    tld = labels[-1]
    group = classify_tld(tld, group_table) if group_table is not None else None
    return RegisteredDomain(name=name, public_suffix=suffix, tld=tld, tld_group=group)


def extract_fqdn(
    text: str,
    rules: SuffixRuleSet,
    group_table: Optional[dict] = None,
) -> Fqdn:
    """Full hostname together with its registered domain."""
    host = _host_of(text)
    registered = extract_registered_domain(text, rules, group_table)
    return Fqdn(name=".".join(normalize_host(host)), registered=registered)


def classify_tld(tld: str, group_table: dict) -> TldGroup:
    """Group assignment for a TLD; total over all inputs.

    Unknown TLDs default to OTHER_CCTLD when two letters long (the
    ISO-3166 convention), NEW_GTLD otherwise.
    """
    tld = _ascii_label(tld.strip().strip("."))
    group = group_table.get(tld)
    if group is not None:
        return group
    return TldGroup.OTHER_CCTLD if len(tld) == 2 else TldGroup.NEW_GTLD


def load_tld_groups(text: str) -> dict:
    """Load the TLD-group table from CSV ``tld,group``."""
    table = {}
    reader = csv.reader(text.splitlines())
    for row in reader:
        if not row or row[0].startswith("#"):
            continue
        if row[0].strip().lower() == "tld":
            continue
        if len(row) != 2:
            raise ValueError(f"bad tld-group row: {row!r}")
        table[_ascii_label(row[0].strip())] = TldGroup(row[1].strip())
    return table


def load_suffix_set(lines: Iterable[str]) -> frozenset:
    """Plain suffix set (free-provider lists): one suffix per line."""
    out = set()
    for raw in lines:
        line = raw.strip().lower()
        if line and not line.startswith("#"):
            out.add(".".join(normalize_host(line)))
    return frozenset(out)


def suffix_match(name: str, suffixes: frozenset) -> Optional[str]:
    """Longest suffix from ``suffixes`` matching ``name`` on label boundaries."""
    labels = name.lower().rstrip(".").split(".")
    for i in range(len(labels)):
        candidate = ".".join(labels[i:])
        if candidate in suffixes:
            return candidate
    return None
