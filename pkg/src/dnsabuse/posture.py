"""Active DNS security-posture measurement.

Covers DNSSEC record collection and chain validation, signature and key
hygiene checks, DMARC policy parsing, and open-resolver probing with the
AS/country/region aggregation tables.

Status mapping notes (scan-level fetch statuses): REFUSED comes straight
from the RCODE, NXDOMAIN/SERVFAIL likewise; Timeout is a transport
deadline; AuthFail maps from RCODE 9 (NOTAUTH); Temporary covers other
socket-level failures; anything else lands in Error.
"""

from __future__ import annotations

import csv
import random
import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import dnssec, dnswire
from .nettables import PrefixTable
from .resolver import DnsTimeout, StubResolver


class Validation(Enum):
    NOT_ATTEMPTED = "not_attempted"
    SECURE = "secure"
    INSECURE = "insecure"
    BOGUS = "bogus"


class DnssecCategory(Enum):
    UNSIGNED = "unsigned"
    INCORRECTLY_SIGNED = "incorrectly_signed"
    CORRECTLY_SIGNED = "correctly_signed"


class KeyPolicy(Enum):
    RECOMMENDED = "recommended"
    NOT_RECOMMENDED = "not_recommended"
    MUST_NOT = "must_not"


class RrsigValidity(Enum):
    VALID = "valid"
    EXPIRED = "expired"
    NOT_YET_VALID = "not_yet_valid"


@dataclass
class KeyFinding:
    algorithm: int
    policy: KeyPolicy
    key_bits: int
    unknown_algorithm: bool = False


@dataclass
class DnssecRecords:
    """Raw collection result for one domain."""

    domain: str
    responsive: bool
    has_ds: bool = False
    has_dnskey: bool = False
    has_rrsig: bool = False
    ds: List[dnswire.Record] = field(default_factory=list)
    dnskeys: List[dnswire.Record] = field(default_factory=list)
    rrsigs: List[dnswire.Record] = field(default_factory=list)


@dataclass
class DnssecPosture:
    domain: str
    responsive: bool
    has_ds: bool
    has_dnskey: bool
    has_rrsig: bool
    validation: Validation
    category: Optional[DnssecCategory]
    nsec_present: bool = False
    expired_rrsig_count: int = 0
    key_findings: List[KeyFinding] = field(default_factory=list)


def collect_dnssec(domain: str, resolver: StubResolver) -> DnssecRecords:
    """Presence probe: DS and DNSKEY queries (DNSSEC OK, checking
    disabled) plus a SOA query to capture signatures from zones that
    publish RRSIGs without keys. Non-responsive = not NOERROR on both
    probe queries."""
    out = DnssecRecords(domain=domain, responsive=False)
    try:
        ds_reply = resolver.query(domain, dnswire.DS, want_dnssec=True)
        key_reply = resolver.query(domain, dnswire.DNSKEY, want_dnssec=True)
        soa_reply = resolver.query(domain, dnswire.SOA, want_dnssec=True)
    except DnsTimeout:
        return out
    out.responsive = (ds_reply.rcode == dnswire.NOERROR
                      and key_reply.rcode == dnswire.NOERROR)
    out.ds = [r for r in ds_reply.answers if r.rtype == dnswire.DS]
    out.dnskeys = [r for r in key_reply.answers if r.rtype == dnswire.DNSKEY]
    for reply in (key_reply, soa_reply):
        for rec in reply.answers + reply.authority:
            if rec.rtype == dnswire.RRSIG:
                out.rrsigs.append(rec)
    out.has_ds = bool(out.ds)
    out.has_dnskey = bool(out.dnskeys)
    out.has_rrsig = bool(out.rrsigs)
    return out


def categorize_dnssec(has_ds: bool, has_dnskey: bool, has_rrsig: bool,
                      validation: Validation) -> DnssecCategory:
    """Pure three-way categorization; total over all 8 x 4 inputs.

    Unsigned: no DNSSEC records at all. Correctly signed: all three
    present and the chain validates. Everything else (islands of
    security, bogus configurations, failed validation) is incorrectly
    signed.
    """
    if not (has_ds or has_dnskey or has_rrsig):
        return DnssecCategory.UNSIGNED
    if has_ds and has_dnskey and has_rrsig and validation is Validation.SECURE:
        return DnssecCategory.CORRECTLY_SIGNED
    return DnssecCategory.INCORRECTLY_SIGNED


class ChainValidationError(Exception):
    """Transport-level failure while validating (distinct from Bogus)."""


class ChainValidator:
    """Walks the DS/DNSKEY chain from a trust anchor down to a domain
    and checks the SOA and DNSKEY signatures."""

    def __init__(self, resolver: StubResolver, trust_anchor: dnswire.Record,
                 now: Optional[int] = None):
        self.resolver = resolver
        self.trust_anchor = trust_anchor
        self.now = now

    def _query(self, name: str, rtype: int) -> dnswire.Message:
        try:
            return self.resolver.query(name, rtype, want_dnssec=True)
        except DnsTimeout as exc:
            raise ChainValidationError(str(exc)) from exc

    def _check_times(self, rrsig: dnswire.Record) -> bool:
        if self.now is None:
            return True
        sig = rrsig.rrsig_fields()
        return sig["inception"] <= self.now and sig["expiration"] >= self.now

    def _validated_keys(self, zone: str,
                        ds_set: Sequence[dnswire.Record]) -> List[dnswire.Record]:
        """DNSKEY RRset of ``zone`` validated against DS digests; the whole
        RRset becomes trusted once one matching KSK verifies it."""
        reply = self._query(zone, dnswire.DNSKEY)
        keys = [r for r in reply.answers if r.rtype == dnswire.DNSKEY]
        sigs = [r for r in reply.answers if r.rtype == dnswire.RRSIG
                and r.rrsig_fields()["type_covered"] == dnswire.DNSKEY]
        if not keys or not sigs:
            raise dnssec.SignatureInvalid(f"{zone}: DNSKEY RRset incomplete")
        digests = {(d.ds_fields()["key_tag"], d.ds_fields()["digest"])
                   for d in ds_set}
        anchors = [
            k for k in keys
            if (dnssec.key_tag(k.rdata), dnssec.ds_digest(zone, k)) in digests
        ]
        if not anchors:
            raise dnssec.SignatureInvalid(f"{zone}: no DNSKEY matches DS")
        for sig in sigs:
            if not self._check_times(sig):
                continue
            for anchor in anchors:
                try:
                    dnssec.verify_rrsig(keys, sig, anchor)
                    return keys
                except dnssec.SignatureInvalid:
                    continue
        raise dnssec.SignatureInvalid(f"{zone}: DNSKEY RRset signature invalid")

    def validate(self, domain: str) -> Validation:
        domain = dnswire.canonical_name(domain)
        chain = ["."]
        labels = domain.rstrip(".").split(".")
        for i in range(len(labels) - 1, -1, -1):
            chain.append(".".join(labels[i:]) + ".")
        try:
            trusted = self._validated_keys(".", [self.trust_anchor])
            for zone in chain[1:]:
                ds_reply = self._query(zone, dnswire.DS)
                ds_set = [r for r in ds_reply.answers if r.rtype == dnswire.DS]
                if not ds_set:
                    return Validation.INSECURE  # chain of trust ends here
                ds_sigs = [r for r in ds_reply.answers if r.rtype == dnswire.RRSIG]
                self._verify_with_any(ds_set, ds_sigs, trusted, f"{zone} DS")
                trusted = self._validated_keys(zone, ds_set)
            soa_reply = self._query(domain, dnswire.SOA)
            soa_set = [r for r in soa_reply.answers if r.rtype == dnswire.SOA]
            soa_sigs = [r for r in soa_reply.answers if r.rtype == dnswire.RRSIG]
            if not soa_set:
                raise dnssec.SignatureInvalid(f"{domain}: no SOA to validate")
            self._verify_with_any(soa_set, soa_sigs, trusted, f"{domain} SOA")
        except dnssec.SignatureInvalid:
            return Validation.BOGUS
        return Validation.SECURE

    def _verify_with_any(self, rrset, sigs, keys, what: str) -> None:
        for sig in sigs:
            if not self._check_times(sig):
                continue
            tag = sig.rrsig_fields()["key_tag"]
            for key in keys:
                if dnssec.key_tag(key.rdata) != tag:
                    continue
                try:
                    dnssec.verify_rrsig(rrset, sig, key)
                    return
                except dnssec.SignatureInvalid:
                    continue
        raise dnssec.SignatureInvalid(f"{what}: no valid signature")


def validate_chain(domain: str, trust_anchor: dnswire.Record,
                   resolver: StubResolver,
                   now: Optional[int] = None) -> Validation:
    return ChainValidator(resolver, trust_anchor, now=now).validate(domain)


def check_rrsig_validity(rrsig: dnswire.Record, now: int) -> RrsigValidity:
    """Temporal state of one signature; expiration equal to ``now`` is
    still valid (the expiration field must be >= the current time)."""
    sig = rrsig.rrsig_fields()
    if sig["expiration"] < now:
        return RrsigValidity.EXPIRED
    if sig["inception"] > now:
        return RrsigValidity.NOT_YET_VALID
    return RrsigValidity.VALID


def load_key_policy(lines: Iterable[str]) -> Dict[int, KeyPolicy]:
    """CSV ``code,policy`` where policy is one of the KeyPolicy values."""
    table: Dict[int, KeyPolicy] = {}
    for row in csv.reader(l for l in lines if l.strip() and not l.startswith("#")):
        if row[0].strip().lower() == "code":
            continue
        table[int(row[0])] = KeyPolicy(row[1].strip())
    return table


def check_key_policy(dnskey: dnswire.Record,
                     policy_table: Dict[int, KeyPolicy]) -> KeyFinding:
    fields = dnskey.dnskey_fields()
    alg = fields["algorithm"]
    policy = policy_table.get(alg)
    unknown = policy is None
    if unknown:
        policy = KeyPolicy.NOT_RECOMMENDED
    return KeyFinding(algorithm=alg, policy=policy,
                      key_bits=dnssec.key_size_bits(dnskey),
                      unknown_algorithm=unknown)


def detect_nsec(domain: str, resolver: StubResolver,
                rng: Optional[random.Random] = None) -> bool:
    """True when a negative probe under the domain returns plaintext NSEC
    denial (NSEC3 responses do not count: those hash the zone names)."""
    rng = rng or random
    label = "".join(rng.choices(string.ascii_lowercase + string.digits, k=12))
    try:
        reply = resolver.query(f"{label}.{domain}", dnswire.A, want_dnssec=True)
    except DnsTimeout:
        return False
    records = reply.answers + reply.authority
    return any(r.rtype == dnswire.NSEC for r in records)


def scan_dnssec_posture(domain: str, resolver: StubResolver,
                        trust_anchor: Optional[dnswire.Record],
                        policy_table: Dict[int, KeyPolicy],
                        now: Optional[int] = None,
                        probe_nsec: bool = True) -> DnssecPosture:
    """Full per-domain pipeline: collect, validate when all records are
    present, categorize, and run the hygiene checks."""
    raw = collect_dnssec(domain, resolver)
    validation = Validation.NOT_ATTEMPTED
    if raw.responsive and raw.has_ds and raw.has_dnskey and raw.has_rrsig \
            and trust_anchor is not None:
        try:
            validation = validate_chain(domain, trust_anchor, resolver, now=now)
        except ChainValidationError:
            validation = Validation.NOT_ATTEMPTED
    elif raw.responsive and (raw.has_dnskey or raw.has_rrsig) and not raw.has_ds:
        validation = Validation.INSECURE
    elif raw.responsive and raw.has_ds and not (raw.has_dnskey and raw.has_rrsig):
        validation = Validation.BOGUS
    category = None
    if raw.responsive:
        category = categorize_dnssec(raw.has_ds, raw.has_dnskey, raw.has_rrsig,
                                     validation)
    expired = 0
    if now is not None:
        expired = sum(1 for sig in raw.rrsigs
                      if check_rrsig_validity(sig, now) is RrsigValidity.EXPIRED)
    findings = [check_key_policy(k, policy_table) for k in raw.dnskeys]
    nsec = False
    if probe_nsec and raw.responsive and category is not DnssecCategory.UNSIGNED:
        nsec = detect_nsec(domain, resolver)
    return DnssecPosture(
        domain=domain, responsive=raw.responsive, has_ds=raw.has_ds,
        has_dnskey=raw.has_dnskey, has_rrsig=raw.has_rrsig,
        validation=validation, category=category, nsec_present=nsec,
        expired_rrsig_count=expired, key_findings=findings,
    )


def dnskey_reuse_report(postures_keys: Dict[str, List[dnswire.Record]]) -> Dict[str, List[str]]:
    """Optional cross-domain key-reuse check: digest of the public key
    material -> domains publishing it (only entries shared by >1 domain)."""
    import hashlib

    seen: Dict[str, List[str]] = {}
    for domain, keys in postures_keys.items():
        for key in keys:
            digest = hashlib.sha256(key.dnskey_fields()["key"]).hexdigest()
            seen.setdefault(digest, []).append(domain)
    return {d: sorted(set(doms)) for d, doms in seen.items() if len(set(doms)) > 1}


# ----------------------------------------------------------------------
# DMARC


class DmarcTag(Enum):
    NONE = "none"
    QUARANTINE = "quarantine"
    REJECT = "reject"


@dataclass
class DmarcPolicy:
    domain: str
    present: bool
    p_tag: Optional[DmarcTag] = None
    raw: Optional[str] = None
    error_detail: Optional[str] = None


def evaluate_dmarc(domain: str, resolver: StubResolver) -> DmarcPolicy:
    """TXT of the ``_dmarc`` child only; NXDOMAIN means no DMARC at all.
    Multiple DMARC records leave the policy unset (treated as
    unprotected)."""
    name = f"_dmarc.{domain}"
    try:
        reply = resolver.query(name, dnswire.TXT)
    except DnsTimeout:
        return DmarcPolicy(domain=domain, present=False, error_detail="timeout")
    if reply.rcode != dnswire.NOERROR:
        return DmarcPolicy(domain=domain, present=False)
    records = [r.txt_value() for r in reply.answers if r.rtype == dnswire.TXT]
    dmarc = [r for r in records
             if r.split(";", 1)[0].strip().lower().replace(" ", "") == "v=dmarc1"]
    if not dmarc:
        return DmarcPolicy(domain=domain, present=False)
    if len(dmarc) > 1:
        return DmarcPolicy(domain=domain, present=True, raw=dmarc[0],
                           error_detail="multiple DMARC records")
    record = dmarc[0]
    p_tag = None
    for part in record.split(";"):
        tag, _, value = part.strip().partition("=")
        if tag.strip().lower() == "p":
            try:
                p_tag = DmarcTag(value.strip().lower())
            except ValueError:
                return DmarcPolicy(domain=domain, present=True, raw=record,
                                   error_detail=f"unknown p tag {value!r}")
            break
    return DmarcPolicy(domain=domain, present=True, p_tag=p_tag, raw=record)


# ----------------------------------------------------------------------
# Open-resolver probing


class ProbeStatus(Enum):
    OPEN_CORRECT = "open_correct"
    OPEN_EMPTY = "open_empty"
    OPEN_BOGUS = "open_bogus"
    CLOSED_OR_FILTERED = "closed_or_filtered"
    ERROR_RCODE = "error_rcode"


@dataclass
class ResolverProbeResult:
    target_ip: str
    status: ProbeStatus
    asn: Optional[int] = None
    country: Optional[str] = None


def make_probe_domain(target_ip: str, scan_id: str, harness_zone: str) -> str:
    """Unique per-target probe name so cached answers cannot cross-talk."""
    import ipaddress

    packed = ipaddress.ip_address(target_ip).packed
    return f"{packed.hex()}.{scan_id}.{harness_zone.strip('.')}"


def probe_resolver(target, probe_domain: str, authoritative_answer: str,
                   timeout: float = 2.0) -> ResolverProbeResult:
    """One 'A' probe against a candidate resolver.

    ``target`` is an IP string or an (ip, port) pair (fixture harnesses
    run on ephemeral ports).
    """
    if isinstance(target, str):
        address: Tuple[str, int] = (target, 53)
    else:
        address = target
    stub = StubResolver(server=address, timeout=timeout, retries=0)
    try:
        reply = stub.query(probe_domain, dnswire.A)
    except (DnsTimeout, OSError):
        return ResolverProbeResult(target_ip=address[0],
                                   status=ProbeStatus.CLOSED_OR_FILTERED)
    if reply.rcode != dnswire.NOERROR:
        return ResolverProbeResult(target_ip=address[0],
                                   status=ProbeStatus.ERROR_RCODE)
    addresses = [r.address() for r in reply.answers if r.rtype == dnswire.A]
    if not addresses:
        return ResolverProbeResult(target_ip=address[0],
                                   status=ProbeStatus.OPEN_EMPTY)
    if authoritative_answer in addresses:
        return ResolverProbeResult(target_ip=address[0],
                                   status=ProbeStatus.OPEN_CORRECT)
    return ResolverProbeResult(target_ip=address[0],
                               status=ProbeStatus.OPEN_BOGUS)


@dataclass
class ResolverAggregates:
    by_asn: List[dict]
    by_country: List[dict]
    by_region: List[dict]
    unattributed: int


def aggregate_resolvers(results: Sequence[ResolverProbeResult],
                        ip2asn: PrefixTable, ip2country: PrefixTable,
                        as_announced_sizes: Dict[int, int],
                        regions: Optional[Dict[str, str]] = None) -> ResolverAggregates:
    """AS/country/region tables over probe results.

    Only OPEN_CORRECT resolvers count as abusable reflectors; bogus and
    empty responders are tallied but excluded from ratios, since they
    answer without contacting authoritative servers.
    """
    per_asn: Dict[int, Dict[str, object]] = {}
    per_country: Dict[str, int] = {}
    per_region: Dict[str, int] = {}
    unattributed = 0
    total_open = 0
    for res in results:
        hit = ip2asn.lookup(res.target_ip)
        cc = ip2country.lookup(res.target_ip)
        res.asn = hit[0] if hit else None
        res.country = cc
        if hit is None and cc is None:
            unattributed += 1
        open_correct = res.status is ProbeStatus.OPEN_CORRECT
        if hit is not None:
            asn, as_name = hit
            row = per_asn.setdefault(asn, {
                "asn": asn, "as_name": as_name, "open_correct": 0,
                "open_empty": 0, "open_bogus": 0, "closed_or_filtered": 0,
                "error_rcode": 0,
            })
            row[res.status.value] += 1
        if open_correct:
            total_open += 1
            if cc is not None:
                per_country[cc] = per_country.get(cc, 0) + 1
                if regions and cc in regions:
                    region = regions[cc]
                    per_region[region] = per_region.get(region, 0) + 1
    by_asn = []
    for asn in sorted(per_asn, key=lambda a: (-per_asn[a]["open_correct"], a)):
        row = dict(per_asn[asn])
        size = as_announced_sizes.get(asn)
        row["announced_size"] = size
        row["open_ratio_pct"] = (
            round(100.0 * row["open_correct"] / size, 2) if size else None
        )
        by_asn.append(row)
    by_country = [
        {"country": cc, "open_correct": n}
        for cc, n in sorted(per_country.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    by_region = [
        {"region": region, "share_pct": round(100.0 * n / total_open, 1)}
        for region, n in sorted(per_region.items())
    ] if total_open else []
    return ResolverAggregates(by_asn=by_asn, by_country=by_country,
                              by_region=by_region, unattributed=unattributed)
