"""DNSSEC primitives: key tags, DS digests, canonical RRset form and
RRSIG signing/verification.

Signing exists for the fixture harness (it builds signed zone
hierarchies); verification is the measurement path. ECDSA P-256
(algorithm 13) is used throughout; RSA keys are parsed only far enough
to report their sizes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from . import dnswire
from .dnswire import Record

ALG_RSASHA1 = 5
ALG_RSASHA256 = 8
ALG_ECDSAP256SHA256 = 13

DIGEST_SHA256 = 2

FLAG_ZONE = 0x0100  # ZSK
FLAG_SEP = 0x0001   # set together with ZONE for a KSK (flags value 257)


class DnssecError(Exception):
    pass


class SignatureInvalid(DnssecError):
    pass


def key_tag(dnskey_rdata: bytes) -> int:
    """RFC 4034 appendix B key-tag computation over the DNSKEY rdata."""
    total = 0
    for i, byte in enumerate(dnskey_rdata):
        total += byte << 8 if i % 2 == 0 else byte
    total += (total >> 16) & 0xFFFF
    return total & 0xFFFF


def ds_digest(owner: str, dnskey: Record, digest_type: int = DIGEST_SHA256) -> bytes:
    """Digest of owner name (canonical wire form) plus DNSKEY rdata."""
    if digest_type != DIGEST_SHA256:
        raise DnssecError(f"unsupported DS digest type {digest_type}")
    return hashlib.sha256(dnswire.name_to_wire(owner) + dnskey.rdata).digest()


def make_ds(owner: str, dnskey: Record, ttl: int = 300) -> Record:
    fields = dnskey.dnskey_fields()
    return Record.ds(
        owner,
        key_tag(dnskey.rdata),
        fields["algorithm"],
        DIGEST_SHA256,
        ds_digest(owner, dnskey),
        ttl=ttl,
    )


def canonical_rrset_wire(records: Sequence[Record], original_ttl: int) -> bytes:
    """Canonical wire form of an RRset per RFC 4034 section 6.

    Owner names lowercase and uncompressed; records sorted by rdata as
    left-justified octet strings; TTL replaced by the original TTL.
    """
    if not records:
        raise DnssecError("empty RRset")
    name = dnswire.canonical_name(records[0].name)
    rtype, rclass = records[0].rtype, records[0].rclass
    owner_wire = dnswire.name_to_wire(name)
    pieces = []
    for rec in sorted(records, key=lambda r: r.rdata):
        pieces.append(
            owner_wire
            + struct.pack("!HHIH", rtype, rclass, original_ttl, len(rec.rdata))
            + rec.rdata
        )
    return b"".join(pieces)


def _rrsig_rdata_prefix(type_covered: int, algorithm: int, labels: int,
                        original_ttl: int, expiration: int, inception: int,
                        tag: int, signer: str) -> bytes:
    return (
        struct.pack("!HBBIIIH", type_covered, algorithm, labels,
                    original_ttl, expiration, inception, tag)
        + dnswire.name_to_wire(signer)
    )


def _owner_label_count(name: str) -> int:
    name = dnswire.canonical_name(name)
    if name == ".":
        return 0
    labels = name.rstrip(".").split(".")
    if labels and labels[0] == "*":
        labels = labels[1:]
    return len(labels)


@dataclass
class SigningKey:
    """Private/public ECDSA P-256 pair in DNSKEY form."""

    private: ec.EllipticCurvePrivateKey
    dnskey: Record

    @property
    def tag(self) -> int:
        return key_tag(self.dnskey.rdata)


def generate_key(owner: str, *, ksk: bool = False, ttl: int = 300) -> SigningKey:
    private = ec.generate_private_key(ec.SECP256R1())
    numbers = private.public_key().public_numbers()
    pubkey = numbers.x.to_bytes(32, "big") + numbers.y.to_bytes(32, "big")
    flags = FLAG_ZONE | (FLAG_SEP if ksk else 0)
    rec = Record.dnskey(owner, flags, ALG_ECDSAP256SHA256, pubkey, ttl=ttl)
    return SigningKey(private=private, dnskey=rec)


def sign_rrset(records: Sequence[Record], key: SigningKey, signer: str,
               inception: int, expiration: int,
               ttl: Optional[int] = None) -> Record:
    """Produce the RRSIG covering one RRset."""
    records = list(records)
    original_ttl = records[0].ttl
    prefix = _rrsig_rdata_prefix(
        records[0].rtype, ALG_ECDSAP256SHA256,
        _owner_label_count(records[0].name),
        original_ttl, expiration, inception, key.tag, signer,
    )
    signed_data = prefix + canonical_rrset_wire(records, original_ttl)
    der = key.private.sign(signed_data, ec.ECDSA(hashes.SHA256()))
    r, s = decode_dss_signature(der)
    signature = r.to_bytes(32, "big") + s.to_bytes(32, "big")
    return Record(
        dnswire.canonical_name(records[0].name), dnswire.RRSIG,
        dnswire.CLASS_IN, ttl if ttl is not None else original_ttl,
        prefix + signature,
    )


def verify_rrsig(records: Sequence[Record], rrsig: Record,
                 dnskey: Record) -> None:
    """Verify an RRSIG against a DNSKEY; raises SignatureInvalid on failure.

    Temporal validity is checked separately (check_rrsig_validity), so a
    verified-but-expired signature is still a caller-side policy decision.
    """
    sig = rrsig.rrsig_fields()
    key_fields = dnskey.dnskey_fields()
    if sig["algorithm"] != key_fields["algorithm"]:
        raise SignatureInvalid("algorithm mismatch between RRSIG and DNSKEY")
    if sig["key_tag"] != key_tag(dnskey.rdata):
        raise SignatureInvalid("key tag mismatch")
    if not records or records[0].rtype != sig["type_covered"]:
        raise SignatureInvalid("RRSIG does not cover this RRset type")
    if sig["algorithm"] != ALG_ECDSAP256SHA256:
        raise SignatureInvalid(f"unsupported algorithm {sig['algorithm']}")
    raw = key_fields["key"]
    if len(raw) != 64 or len(sig["signature"]) != 64:
        raise SignatureInvalid("malformed P-256 key or signature")
    numbers = ec.EllipticCurvePublicNumbers(
        int.from_bytes(raw[:32], "big"), int.from_bytes(raw[32:], "big"),
        ec.SECP256R1(),
    )
    try:
        public = numbers.public_key()
    except ValueError as exc:
        raise SignatureInvalid("public key not on curve") from exc
    prefix = _rrsig_rdata_prefix(
        sig["type_covered"], sig["algorithm"], sig["labels"],
        sig["original_ttl"], sig["expiration"], sig["inception"],
        sig["key_tag"], sig["signer"],
    )
    signed_data = prefix + canonical_rrset_wire(records, sig["original_ttl"])
    der = encode_dss_signature(
        int.from_bytes(sig["signature"][:32], "big"),
        int.from_bytes(sig["signature"][32:], "big"),
    )
    try:
        public.verify(der, signed_data, ec.ECDSA(hashes.SHA256()))
    except Exception as exc:  # InvalidSignature
        raise SignatureInvalid("signature verification failed") from exc


def key_size_bits(dnskey: Record) -> int:
    """Public-key size in bits, from the DNSKEY rdata."""
    fields = dnskey.dnskey_fields()
    alg, raw = fields["algorithm"], fields["key"]
    if alg in (ALG_ECDSAP256SHA256,):
        return 256
    if alg == 14:  # ECDSA P-384
        return 384
    if alg in (15, 16):  # EdDSA
        return len(raw) * 4
    # RSA variants: exponent length prefix then modulus
    if not raw:
        return 0
    if raw[0] != 0:
        exp_len, off = raw[0], 1
    else:
        exp_len = struct.unpack_from("!H", raw, 1)[0]
        off = 3
    modulus = raw[off + exp_len:]
    return len(modulus) * 8


def find_keys(dnskeys: Iterable[Record], tag: int) -> List[Record]:
    return [k for k in dnskeys if key_tag(k.rdata) == tag]
