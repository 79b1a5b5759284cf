"""Minimal DNS wire-format codec.

Covers the record types the scanners need (A/AAAA/NS/CNAME/SOA/MX/TXT/PTR
plus the DNSSEC set DS/DNSKEY/RRSIG/NSEC/NSEC3 and the OPT pseudo-record).
Names inside rdata are always stored and re-encoded uncompressed so the
DNSSEC canonical form can be computed directly from ``rdata``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple


class WireError(ValueError):
    """Malformed DNS message."""


# record types
A = 1
NS = 2
CNAME = 5
SOA = 6
PTR = 12
MX = 15
TXT = 16
AAAA = 28
OPT = 41
DS = 43
RRSIG = 46
NSEC = 47
DNSKEY = 48
NSEC3 = 50

CLASS_IN = 1

# rcodes
NOERROR = 0
FORMERR = 1
SERVFAIL = 2
NXDOMAIN = 3
NOTIMP = 4
REFUSED = 5

RCODE_NAMES = {
    NOERROR: "NOERROR",
    FORMERR: "FORMERR",
    SERVFAIL: "SERVFAIL",
    NXDOMAIN: "NXDOMAIN",
    NOTIMP: "NOTIMP",
    REFUSED: "REFUSED",
}

TYPE_NAMES = {
    A: "A", NS: "NS", CNAME: "CNAME", SOA: "SOA", PTR: "PTR", MX: "MX",
    TXT: "TXT", AAAA: "AAAA", OPT: "OPT", DS: "DS", RRSIG: "RRSIG",
    NSEC: "NSEC", DNSKEY: "DNSKEY", NSEC3: "NSEC3",
}

# header flag bits
FLAG_QR = 0x8000
FLAG_AA = 0x0400
FLAG_TC = 0x0200
FLAG_RD = 0x0100
FLAG_RA = 0x0080
FLAG_AD = 0x0020
FLAG_CD = 0x0010

EDNS_DO = 0x8000  # DNSSEC OK bit in OPT ttl field


def canonical_name(name: str) -> str:
    """Lowercased, dot-terminated form used as a lookup and signing key."""
    name = name.lower()
    if not name.endswith("."):
        name += "."
    return name


def split_labels(name: str) -> list:
    """Presentation-form labels; ``\\.`` keeps a dot inside a label
    (SOA RNAME fields encode mailbox local parts this way)."""
    labels, current, i = [], [], 0
    while i < len(name):
        ch = name[i]
        if ch == "\\" and i + 1 < len(name):
            current.append(name[i + 1])
            i += 2
        elif ch == ".":
            labels.append("".join(current))
            current = []
            i += 1
        else:
            current.append(ch)
            i += 1
    if current:
        labels.append("".join(current))
    return [l for l in labels if l != ""] if labels else []


def name_to_wire(name: str) -> bytes:
    """Uncompressed wire encoding of a domain name."""
    name = canonical_name(name)
    if name == ".":
        return b"\x00"
    out = bytearray()
    for label in split_labels(name):
        raw = label.encode("ascii")
        if not 0 < len(raw) < 64:
            raise WireError(f"bad label length in {name!r}")
        out.append(len(raw))
        out += raw
    out.append(0)
    return bytes(out)


def name_from_wire(buf: bytes, off: int) -> Tuple[str, int]:
    """Decode a possibly compressed name; returns (name, next offset)."""
    labels = []
    jumps = 0
    end = None
    while True:
        if off >= len(buf):
            raise WireError("truncated name")
        length = buf[off]
        if length & 0xC0 == 0xC0:
            if off + 1 >= len(buf):
                raise WireError("truncated compression pointer")
            pointer = ((length & 0x3F) << 8) | buf[off + 1]
            if end is None:
                end = off + 2
            off = pointer
            jumps += 1
            if jumps > 128:
                raise WireError("compression pointer loop")
            continue
        off += 1
        if length == 0:
            break
        if off + length > len(buf):
            raise WireError("truncated label")
        text = buf[off:off + length].decode("ascii", errors="replace")
        labels.append(text.replace("\\", "\\\\").replace(".", "\\."))
        off += length
    name = ".".join(labels) + "." if labels else "."
    return name, (end if end is not None else off)


def _ipv4_to_bytes(addr: str) -> bytes:
    parts = addr.split(".")
    if len(parts) != 4:
        raise WireError(f"bad IPv4 address {addr!r}")
    return bytes(int(p) for p in parts)


def _ipv6_to_bytes(addr: str) -> bytes:
    import ipaddress

    return ipaddress.IPv6Address(addr).packed


@dataclass(frozen=True)
class Record:
    """One resource record; rdata is the uncompressed wire form."""

    name: str
    rtype: int
    rclass: int
    ttl: int
    rdata: bytes

    # -- constructors ------------------------------------------------

    @staticmethod
    def a(name: str, address: str, ttl: int = 300) -> "Record":
        return Record(canonical_name(name), A, CLASS_IN, ttl, _ipv4_to_bytes(address))

    @staticmethod
    def aaaa(name: str, address: str, ttl: int = 300) -> "Record":
        return Record(canonical_name(name), AAAA, CLASS_IN, ttl, _ipv6_to_bytes(address))

    @staticmethod
    def ns(name: str, target: str, ttl: int = 300) -> "Record":
        return Record(canonical_name(name), NS, CLASS_IN, ttl, name_to_wire(target))

    @staticmethod
    def cname(name: str, target: str, ttl: int = 300) -> "Record":
        return Record(canonical_name(name), CNAME, CLASS_IN, ttl, name_to_wire(target))

    @staticmethod
    def ptr(name: str, target: str, ttl: int = 300) -> "Record":
        return Record(canonical_name(name), PTR, CLASS_IN, ttl, name_to_wire(target))

    @staticmethod
    def mx(name: str, preference: int, exchange: str, ttl: int = 300) -> "Record":
        return Record(
            canonical_name(name), MX, CLASS_IN, ttl,
            struct.pack("!H", preference) + name_to_wire(exchange),
        )

    @staticmethod
    def txt(name: str, *strings: str, ttl: int = 300) -> "Record":
        rdata = bytearray()
        for s in strings:
            raw = s.encode("utf-8")
            # long strings are split into 255-byte chunks per the wire format
            for i in range(0, max(len(raw), 1), 255):
                chunk = raw[i:i + 255]
                rdata.append(len(chunk))
                rdata += chunk
        return Record(canonical_name(name), TXT, CLASS_IN, ttl, bytes(rdata))

    @staticmethod
    def soa(name: str, mname: str, rname: str, serial: int = 1,
            refresh: int = 3600, retry: int = 600, expire: int = 86400,
            minimum: int = 300, ttl: int = 300) -> "Record":
        rdata = (name_to_wire(mname) + name_to_wire(rname)
                 + struct.pack("!IIIII", serial, refresh, retry, expire, minimum))
        return Record(canonical_name(name), SOA, CLASS_IN, ttl, rdata)

    @staticmethod
    def ds(name: str, key_tag: int, algorithm: int, digest_type: int,
           digest: bytes, ttl: int = 300) -> "Record":
        rdata = struct.pack("!HBB", key_tag, algorithm, digest_type) + digest
        return Record(canonical_name(name), DS, CLASS_IN, ttl, rdata)

    @staticmethod
    def dnskey(name: str, flags: int, algorithm: int, key: bytes,
               ttl: int = 300) -> "Record":
        rdata = struct.pack("!HBB", flags, 3, algorithm) + key
        return Record(canonical_name(name), DNSKEY, CLASS_IN, ttl, rdata)

    @staticmethod
    def nsec(name: str, next_name: str, types: Tuple[int, ...],
             ttl: int = 300) -> "Record":
        rdata = name_to_wire(next_name) + _type_bitmap(types)
        return Record(canonical_name(name), NSEC, CLASS_IN, ttl, rdata)

    @staticmethod
    def nsec3(name: str, hash_alg: int, flags: int, iterations: int,
              salt: bytes, next_hashed: bytes, types: Tuple[int, ...],
              ttl: int = 300) -> "Record":
        rdata = (struct.pack("!BBH", hash_alg, flags, iterations)
                 + bytes([len(salt)]) + salt
                 + bytes([len(next_hashed)]) + next_hashed
                 + _type_bitmap(types))
        return Record(canonical_name(name), NSEC3, CLASS_IN, ttl, rdata)

    # -- parsed views ------------------------------------------------

    def address(self) -> str:
        if self.rtype == A:
            return ".".join(str(b) for b in self.rdata)
        if self.rtype == AAAA:
            import ipaddress

            return str(ipaddress.IPv6Address(self.rdata))
        raise WireError("not an address record")

    def target(self) -> str:
        if self.rtype not in (NS, CNAME, PTR):
            raise WireError("record has no target name")
        return name_from_wire(self.rdata, 0)[0]

    def mx_fields(self) -> Tuple[int, str]:
        (pref,) = struct.unpack_from("!H", self.rdata, 0)
        return pref, name_from_wire(self.rdata, 2)[0]

    def txt_strings(self) -> List[bytes]:
        out, off = [], 0
        while off < len(self.rdata):
            n = self.rdata[off]
            off += 1
            out.append(self.rdata[off:off + n])
            off += n
        return out

    def txt_value(self) -> str:
        return b"".join(self.txt_strings()).decode("utf-8", errors="replace")

    def soa_fields(self) -> dict:
        mname, off = name_from_wire(self.rdata, 0)
        rname, off = name_from_wire(self.rdata, off)
        serial, refresh, retry, expire, minimum = struct.unpack_from("!IIIII", self.rdata, off)
        return {
            "mname": mname, "rname": rname, "serial": serial,
            "refresh": refresh, "retry": retry, "expire": expire,
            "minimum": minimum,
        }

    def ds_fields(self) -> dict:
        key_tag, algorithm, digest_type = struct.unpack_from("!HBB", self.rdata, 0)
        return {
            "key_tag": key_tag, "algorithm": algorithm,
            "digest_type": digest_type, "digest": self.rdata[4:],
        }

    def dnskey_fields(self) -> dict:
        flags, protocol, algorithm = struct.unpack_from("!HBB", self.rdata, 0)
        return {
            "flags": flags, "protocol": protocol, "algorithm": algorithm,
            "key": self.rdata[4:],
        }

    def rrsig_fields(self) -> dict:
        (type_covered, algorithm, labels, original_ttl, expiration,
         inception, key_tag) = struct.unpack_from("!HBBIIIH", self.rdata, 0)
        signer, off = name_from_wire(self.rdata, 18)
        return {
            "type_covered": type_covered, "algorithm": algorithm,
            "labels": labels, "original_ttl": original_ttl,
            "expiration": expiration, "inception": inception,
            "key_tag": key_tag, "signer": signer,
            "signature": self.rdata[off:],
        }


def _type_bitmap(types: Tuple[int, ...]) -> bytes:
    windows: dict = {}
    for t in types:
        windows.setdefault(t >> 8, []).append(t & 0xFF)
    out = bytearray()
    for window in sorted(windows):
        bits = bytearray(32)
        for low in windows[window]:
            bits[low >> 3] |= 0x80 >> (low & 7)
        length = max(i + 1 for i, b in enumerate(bits) if b)
        out += bytes([window, length]) + bits[:length]
    return bytes(out)


@dataclass
class Message:
    """A DNS message; question is (name, qtype, qclass)."""

    id: int = 0
    flags: int = 0
    question: Optional[Tuple[str, int, int]] = None
    answers: List[Record] = field(default_factory=list)
    authority: List[Record] = field(default_factory=list)
    additional: List[Record] = field(default_factory=list)
    edns_udp_size: Optional[int] = None
    edns_do: bool = False

    @property
    def rcode(self) -> int:
        return self.flags & 0x000F

    def set_rcode(self, rcode: int) -> None:
        self.flags = (self.flags & ~0x000F) | (rcode & 0x000F)

    @property
    def is_response(self) -> bool:
        return bool(self.flags & FLAG_QR)

    @property
    def truncated(self) -> bool:
        return bool(self.flags & FLAG_TC)


def make_query(name: str, rtype: int, qid: int, *, want_dnssec: bool = False,
               recursion_desired: bool = True, checking_disabled: bool = False,
               udp_size: int = 4096) -> Message:
    flags = FLAG_RD if recursion_desired else 0
    if checking_disabled:
        flags |= FLAG_CD
    msg = Message(id=qid, flags=flags, question=(canonical_name(name), rtype, CLASS_IN))
    if want_dnssec:
        msg.edns_udp_size = udp_size
        msg.edns_do = True
    return msg


def make_response(query: Message, rcode: int = NOERROR, *,
                  authoritative: bool = True,
                  recursion_available: bool = True) -> Message:
    flags = FLAG_QR | (rcode & 0x000F)
    flags |= query.flags & FLAG_RD
    if authoritative:
        flags |= FLAG_AA
    if recursion_available:
        flags |= FLAG_RA
    resp = Message(id=query.id, flags=flags, question=query.question)
    if query.edns_udp_size is not None:
        resp.edns_udp_size = 4096
        resp.edns_do = query.edns_do
    return resp


def encode(msg: Message, *, max_size: Optional[int] = None) -> bytes:
    """Encode a message; sets TC and truncates sections if over max_size."""
    out = bytearray(12)
    offsets: dict = {}

    def put_name(name: str) -> None:
        labels = split_labels(canonical_name(name))
        for i in range(len(labels)):
            rest = tuple(labels[i:])
            if rest in offsets:
                pointer = offsets[rest]
                out.extend(struct.pack("!H", 0xC000 | pointer))
                return
            if len(out) < 0x4000:
                offsets[rest] = len(out)
            raw = labels[i].encode("ascii")
            out.append(len(raw))
            out.extend(raw)
        out.append(0)

    def put_record(rec: Record) -> None:
        put_name(rec.name)
        out.extend(struct.pack("!HHIH", rec.rtype, rec.rclass, rec.ttl, len(rec.rdata)))
        out.extend(rec.rdata)

    qdcount = 1 if msg.question else 0
    additional = list(msg.additional)
    if msg.edns_udp_size is not None:
        opt_ttl = EDNS_DO << 16 if msg.edns_do else 0
        additional.append(Record(".", OPT, msg.edns_udp_size, opt_ttl, b""))

    struct.pack_into("!HHHHHH", out, 0, msg.id, msg.flags, qdcount,
                     len(msg.answers), len(msg.authority), len(additional))
    if msg.question:
        qname, qtype, qclass = msg.question
        put_name(qname)
        out.extend(struct.pack("!HH", qtype, qclass))
    counts = [len(msg.answers), len(msg.authority), len(additional)]
    truncated = False
    for section_index, section in enumerate((msg.answers, msg.authority, additional)):
        kept = 0
        for rec in section:
            mark = len(out)
            put_record(rec)
            if max_size is not None and len(out) > max_size:
                del out[mark:]
                truncated = True
                break
            kept += 1
        counts[section_index] = kept
        if truncated:
            for later in range(section_index + 1, 3):
                counts[later] = 0
            break
    flags = msg.flags | (FLAG_TC if truncated else 0)
    struct.pack_into("!HHHHHH", out, 0, msg.id, flags, qdcount,
                     counts[0], counts[1], counts[2])
    return bytes(out)


def decode(buf: bytes) -> Message:
    if len(buf) < 12:
        raise WireError("message shorter than header")
    qid, flags, qdcount, ancount, nscount, arcount = struct.unpack_from("!HHHHHH", buf, 0)
    off = 12
    question = None
    for _ in range(qdcount):
        qname, off = name_from_wire(buf, off)
        if off + 4 > len(buf):
            raise WireError("truncated question")
        qtype, qclass = struct.unpack_from("!HH", buf, off)
        off += 4
        if question is None:
            question = (qname, qtype, qclass)

    def read_records(count: int) -> List[Record]:
        nonlocal off
        records = []
        for _ in range(count):
            name, noff = name_from_wire(buf, off)
            off = noff
            if off + 10 > len(buf):
                raise WireError("truncated record header")
            rtype, rclass, ttl, rdlen = struct.unpack_from("!HHIH", buf, off)
            off += 10
            if off + rdlen > len(buf):
                raise WireError("truncated rdata")
            rdata = _decompress_rdata(buf, off, rdlen, rtype)
            off += rdlen
            records.append(Record(name, rtype, rclass, ttl, rdata))
        return records

    msg = Message(id=qid, flags=flags, question=question)
    msg.answers = read_records(ancount)
    msg.authority = read_records(nscount)
    additional = read_records(arcount)
    for rec in additional:
        if rec.rtype == OPT:
            msg.edns_udp_size = rec.rclass
            msg.edns_do = bool((rec.ttl >> 16) & EDNS_DO)
        else:
            msg.additional.append(rec)
    return msg


def _decompress_rdata(buf: bytes, off: int, rdlen: int, rtype: int) -> bytes:
    """Re-encode rdata with uncompressed names for the types that allow
    compressed names on the wire."""
    raw = buf[off:off + rdlen]
    if rtype in (NS, CNAME, PTR):
        name, _ = name_from_wire(buf, off)
        return name_to_wire(name)
    if rtype == MX:
        pref = raw[:2]
        name, _ = name_from_wire(buf, off + 2)
        return pref + name_to_wire(name)
    if rtype == SOA:
        mname, o = name_from_wire(buf, off)
        rname, o = name_from_wire(buf, o)
        return name_to_wire(mname) + name_to_wire(rname) + buf[o:off + rdlen]
    if rtype == RRSIG:
        head = raw[:18]
        signer, o = name_from_wire(buf, off + 18)
        return head + name_to_wire(signer) + buf[o:off + rdlen]
    return raw
