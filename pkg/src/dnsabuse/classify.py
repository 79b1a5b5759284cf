"""Maliciously-registered vs. compromised labeling.

Three rules flag a blacklisted registered domain as a malicious
registration: it was registered in a batch (another blacklisted domain
shares its registrar and exact creation time), it was blacklisted within
the age threshold of registration (default 98 days), or its FQDN carries
a brand keyword or a misspelled variant of one. Free-service-provider
names and domains without usable registration data are excluded from the
call entirely rather than misfiled.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .domains import suffix_match
from .feeds import AbuseEvent, AbuseType
from .registration import (
    RegistrationRecord,
    Source,
    normalize_registrar_name,
)

DEFAULT_AGE_DAYS = 98  # tuned threshold; "three months" in round terms


class Transform(Enum):
    OMISSION = "omission"
    INSERTION = "insertion"
    SUBSTITUTION = "substitution"
    HOMOGRAPH = "homograph"


@dataclass(frozen=True)
class BrandLexicon:
    brands: FrozenSet[str]
    variants: Dict[str, Transform]

    def all_terms(self) -> Set[str]:
        return set(self.brands) | set(self.variants)


def load_confusables(lines: Iterable[str]) -> List[Tuple[str, str]]:
    """Homograph map: ``source,replacement`` pairs, one per line.
    Sources may be digraphs (rn -> m)."""
    pairs: List[Tuple[str, str]] = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#") or line.lower().startswith("source,"):
            continue
        source, _, replacement = line.partition(",")
        if not replacement:
            raise ValueError(f"bad confusable row: {raw!r}")
        pairs.append((source.strip(), replacement.strip()))
    return pairs


_MIN_VARIANT_LEN = 2  # degenerate fragments are dropped at generation time


def generate_variants(brands: Iterable[str],
                      confusables: Sequence[Tuple[str, str]]) -> BrandLexicon:
    """Misspelling lexicon: single-character omissions, alphabet-adjacent
    insertions and substitutions, and homograph swaps from the confusable
    map. Each variant is exactly one transform away from its brand and
    never collides with an original brand."""
    brand_set = frozenset(b.strip().lower() for b in brands if b.strip())
    variants: Dict[str, Transform] = {}

    def keep(term: str, transform: Transform) -> None:
        if len(term) >= _MIN_VARIANT_LEN and term not in brand_set:
            variants.setdefault(term, transform)

    for brand in sorted(brand_set):
        for i in range(len(brand)):
            keep(brand[:i] + brand[i + 1:], Transform.OMISSION)
        for i, ch in enumerate(brand):
            for neighbor in _alphabet_neighbors(ch):
                keep(brand[:i + 1] + neighbor + brand[i + 1:], Transform.INSERTION)
            keep(brand[:i + 1] + ch + brand[i + 1:], Transform.INSERTION)
        for i, ch in enumerate(brand):
            for neighbor in _alphabet_neighbors(ch):
                keep(brand[:i] + neighbor + brand[i + 1:], Transform.SUBSTITUTION)
        for source, replacement in confusables:
            start = 0
            while True:
                pos = brand.find(source, start)
                if pos < 0:
                    break
                keep(brand[:pos] + replacement + brand[pos + len(source):],
                     Transform.HOMOGRAPH)
                start = pos + 1
    return BrandLexicon(brands=brand_set, variants=variants)


def _alphabet_neighbors(ch: str) -> List[str]:
    if not ("a" <= ch <= "z"):
        return []
    out = []
    if ch > "a":
        out.append(chr(ord(ch) - 1))
    if ch < "z":
        out.append(chr(ord(ch) + 1))
    return out


_MIN_MATCH_VARIANT = 4   # shorter variants are noise
_MIN_SUBSTRING_TERM = 5  # raw substring scan needs longer terms still


def brand_matches(fqdn: str, lexicon: BrandLexicon) -> Optional[str]:
    """First matching brand term in an FQDN, or None.

    Matching is two-pronged: tokens (split on ``.-_``, including joins
    of adjacent tokens, so wells-fargo matches wellsfargo) checked for
    equality, and a raw substring scan for terms of length >= 5.
    """
    name = fqdn.lower().rstrip(".")
    terms = {t for t in lexicon.brands}
    terms.update(t for t in lexicon.variants if len(t) >= _MIN_MATCH_VARIANT)

    tokens = [t for t in _split_tokens(name) if t]
    joined: Set[str] = set(tokens)
    for run in range(2, min(4, len(tokens)) + 1):
        for i in range(len(tokens) - run + 1):
            joined.add("".join(tokens[i:i + run]))
    for candidate in sorted(joined):
        if candidate in terms:
            return candidate
    for term in sorted(terms, key=lambda t: (-len(t), t)):
        if len(term) >= _MIN_SUBSTRING_TERM and term in name:
            return term
    return None


def _split_tokens(name: str) -> List[str]:
    for sep in ("-", "_"):
        name = name.replace(sep, ".")
    return name.split(".")


class Label(Enum):
    MALICIOUSLY_REGISTERED = "maliciously_registered"
    COMPROMISED = "compromised"
    EXCLUDED = "excluded"


class Rule(Enum):
    BATCH = "batch"
    AGE = "age"
    BRAND_MATCH = "brand_match"


class ExclusionReason(Enum):
    FREE_SERVICE_PROVIDER = "free_service_provider"
    NO_REGISTRATION_DATA = "no_registration_data"


@dataclass
class ClassificationVerdict:
    domain: str
    label: Label
    fired_rules: FrozenSet[Rule] = frozenset()
    exclusion_reason: Optional[ExclusionReason] = None
    matched_brand: Optional[str] = None
    abuse_type: Optional[AbuseType] = None


def _registrar_key(record: RegistrationRecord) -> Optional[str]:
    if record.iana_id is not None:
        return f"iana:{record.iana_id}"
    if record.raw_registrar_name:
        return "name:" + normalize_registrar_name(record.raw_registrar_name)
    return None


def _times_equal(a: datetime, a_date_only: bool,
                 b: datetime, b_date_only: bool) -> bool:
    # WHOIS precision varies; compare at the coarsest precision involved
    if a_date_only or b_date_only:
        return a.date() == b.date()
    return a == b


class CohortIndex:
    """Registrations of every blacklisted domain in the analysis window,
    indexed for the batch-registration test."""

    def __init__(self):
        self._by_key_date: Dict[tuple, List[tuple]] = {}

    def add(self, record: RegistrationRecord) -> None:
        key = _registrar_key(record)
        if key is None or record.creation_date is None:
            return
        bucket = self._by_key_date.setdefault(
            (key, record.creation_date.date()), [])
        bucket.append((record.domain, record.creation_date,
                       record.creation_date_is_date_only))

    @classmethod
    def build(cls, records: Iterable[RegistrationRecord]) -> "CohortIndex":
        index = cls()
        for record in records:
            index.add(record)
        return index

    def has_batch_partner(self, record: RegistrationRecord) -> bool:
        key = _registrar_key(record)
        if key is None or record.creation_date is None:
            return False
        bucket = self._by_key_date.get((key, record.creation_date.date()), ())
        for domain, stamp, date_only in bucket:
            if domain == record.domain:
                continue
            if _times_equal(record.creation_date,
                            record.creation_date_is_date_only,
                            stamp, date_only):
                return True
        return False


@dataclass
class ClassifierConfig:
    age_days: int = DEFAULT_AGE_DAYS
    # brand heuristics were built from phishing attacks; widen deliberately
    brand_abuse_types: FrozenSet[AbuseType] = frozenset({AbuseType.PHISHING})


def classify(event: AbuseEvent,
             registration: Optional[RegistrationRecord],
             cohort: CohortIndex,
             lexicon: BrandLexicon,
             free_providers: FrozenSet[str],
             config: Optional[ClassifierConfig] = None) -> ClassificationVerdict:
    """Label one blacklisted domain. Deterministic and total: every
    event gets exactly one verdict."""
    config = config or ClassifierConfig()
    if event.registered_domain is None:
        # IP literals and unparsable entries have no registration to
        # judge and no hostname for the brand rule to inspect
        return ClassificationVerdict(
            domain=event.raw_entry, label=Label.EXCLUDED,
            exclusion_reason=ExclusionReason.NO_REGISTRATION_DATA,
            abuse_type=event.abuse_type,
        )
    domain_name = event.registered_domain.name
    host = event.fqdn.name if event.fqdn else domain_name

    # exclusion preempts every rule: these names have no registrant of
    # their own to judge
    if suffix_match(host, free_providers) or suffix_match(domain_name, free_providers):
        return ClassificationVerdict(
            domain=domain_name, label=Label.EXCLUDED,
            exclusion_reason=ExclusionReason.FREE_SERVICE_PROVIDER,
            abuse_type=event.abuse_type,
        )

    matched = None
    if event.abuse_type in config.brand_abuse_types:
        matched = brand_matches(host, lexicon)

    fired: Set[Rule] = set()
    if matched:
        fired.add(Rule.BRAND_MATCH)

    no_data = (registration is None
               or registration.source is Source.UNAVAILABLE
               or registration.creation_date is None)
    if no_data:
        if fired:
            return ClassificationVerdict(
                domain=domain_name, label=Label.MALICIOUSLY_REGISTERED,
                fired_rules=frozenset(fired), matched_brand=matched,
                abuse_type=event.abuse_type,
            )
        return ClassificationVerdict(
            domain=domain_name, label=Label.EXCLUDED,
            exclusion_reason=ExclusionReason.NO_REGISTRATION_DATA,
            abuse_type=event.abuse_type,
        )

    age = event.first_seen - registration.creation_date
    if timedelta(0) <= age <= timedelta(days=config.age_days):
        fired.add(Rule.AGE)
    if cohort.has_batch_partner(registration):
        fired.add(Rule.BATCH)

    if fired:
        return ClassificationVerdict(
            domain=domain_name, label=Label.MALICIOUSLY_REGISTERED,
            fired_rules=frozenset(fired), matched_brand=matched,
            abuse_type=event.abuse_type,
        )
    return ClassificationVerdict(domain=domain_name, label=Label.COMPROMISED,
                                 abuse_type=event.abuse_type)


def load_brand_list(lines: Iterable[str]) -> List[str]:
    """One keyword per line; comments and blanks skipped."""
    out = []
    for raw in lines:
        line = raw.strip().lower()
        if line and not line.startswith("#"):
            out.append(line)
    return out
