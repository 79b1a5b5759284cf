"""Longest-prefix lookup tables for IP-to-ASN and IP-to-country mapping.

Input formats are TSV: ``cidr\tasn\tas_name`` and ``cidr\tcc``.
"""

from __future__ import annotations

import ipaddress
from typing import Dict, Iterable, Optional, Tuple


class PrefixTable:
    """Maps IP addresses to values by longest matching prefix."""

    def __init__(self):
        # {(version, prefixlen): {masked_int: value}}
        self._tables: Dict[Tuple[int, int], Dict[int, object]] = {}
        self._lengths: Dict[int, list] = {4: [], 6: []}

    def add(self, cidr: str, value: object) -> None:
        net = ipaddress.ip_network(cidr.strip(), strict=False)
        key = (net.version, net.prefixlen)
        if key not in self._tables:
            self._tables[key] = {}
            self._lengths[net.version] = sorted(
                set(self._lengths[net.version]) | {net.prefixlen}, reverse=True
            )
        self._tables[key][int(net.network_address)] = value

    def lookup(self, ip: str) -> Optional[object]:
        addr = ipaddress.ip_address(ip.strip())
        width = 32 if addr.version == 4 else 128
        as_int = int(addr)
        for plen in self._lengths[addr.version]:
            mask = ((1 << plen) - 1) << (width - plen) if plen else 0
            hit = self._tables[(addr.version, plen)].get(as_int & mask)
            if hit is not None:
                return hit
        return None


def load_ip2asn(lines: Iterable[str]) -> PrefixTable:
    """``cidr\tasn\tas_name`` rows; values are (asn, as_name) tuples."""
    table = PrefixTable()
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise ValueError(f"bad ip2asn row: {raw!r}")
        asn = int(parts[1])
        name = parts[2] if len(parts) > 2 else f"AS{asn}"
        table.add(parts[0], (asn, name))
    return table


def load_ip2country(lines: Iterable[str]) -> PrefixTable:
    """``cidr\tcc`` rows; values are upper-case country codes."""
    table = PrefixTable()
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"bad ip2country row: {raw!r}")
        table.add(parts[0], parts[1].strip().upper())
    return table


def load_country_regions(lines: Iterable[str]) -> Dict[str, str]:
    """CSV ``cc,region`` rows mapping country codes to reporting regions."""
    out: Dict[str, str] = {}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#") or line.lower().startswith("cc,"):
            continue
        cc, _, region = line.partition(",")
        if not region:
            raise ValueError(f"bad region row: {raw!r}")
        out[cc.strip().upper()] = region.strip()
    return out
