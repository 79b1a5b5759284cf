"""Run configuration: a flat ``key = value`` file with environment
overrides (``DNSABUSE_<KEY>``, dots become double underscores).

Fixture mode points scanners at harness ports; live mode requires the
operator to acknowledge active scanning explicitly (``live_ack = true``)
before a single packet leaves the box.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Optional


class ConfigError(ValueError):
    pass


def parse_kv(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        value = value.strip()
        if value and value[0] == value[-1] and value[0] in "\"'" and len(value) >= 2:
            value = value[1:-1]
        out[key.strip().lower()] = value
    return out


def _env_overrides(prefix: str = "DNSABUSE_") -> Dict[str, str]:
    out = {}
    for key, value in os.environ.items():
        if key.startswith(prefix):
            out[key[len(prefix):].lower().replace("__", ".")] = value
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    data_dir: Path = Path("data")
    mode: str = "fixture"  # fixture | live
    live_ack: bool = False
    resolver_host: str = "127.0.0.1"
    resolver_port: int = 53
    dns_timeout: float = 2.0
    smtp_port: int = 25
    http_timeout: float = 5.0
    rate_limit_per_host: float = 10.0
    age_days: int = 98
    window_start: Optional[str] = None
    window_end: Optional[str] = None
    tables: Dict[str, Path] = field(default_factory=dict)
    raw: Dict[str, str] = field(default_factory=dict)

    _TABLE_KEYS = ("suffix_list", "tld_groups", "registrar_directory",
                   "registrar_aliases", "brand_list", "brand_aliases",
                   "free_providers", "ip2asn", "ip2country", "sizes",
                   "regions", "algorithm_policy", "endpoints", "feeds")

    @classmethod
    def load(cls, path=None, env: bool = True) -> "RunConfig":
        values: Dict[str, str] = {}
        if path is not None:
            values.update(parse_kv(Path(path).read_text(encoding="utf-8")))
        if env:
            values.update(_env_overrides())
        cfg = cls(raw=dict(values))
        if "data_dir" in values:
            cfg.data_dir = Path(values["data_dir"])
        cfg.mode = values.get("mode", cfg.mode).lower()
        if cfg.mode not in ("fixture", "live"):
            raise ConfigError(f"mode must be fixture or live, not {cfg.mode!r}")
        cfg.live_ack = cls._bool(values.get("live_ack", "false"))
        if cfg.mode == "live" and not cfg.live_ack:
            raise ConfigError("live mode requires live_ack = true (active "
                              "scanning needs explicit operator sign-off)")
        cfg.resolver_host = values.get("resolver.host", cfg.resolver_host)
        cfg.resolver_port = int(values.get("resolver.port", cfg.resolver_port))
        cfg.dns_timeout = float(values.get("resolver.timeout", cfg.dns_timeout))
        cfg.smtp_port = int(values.get("smtp.port", cfg.smtp_port))
        cfg.http_timeout = float(values.get("http.timeout", cfg.http_timeout))
        cfg.rate_limit_per_host = float(values.get("rate_limit.per_host",
                                                   cfg.rate_limit_per_host))
        cfg.age_days = int(values.get("classifier.age_days", cfg.age_days))
        cfg.window_start = values.get("window.start")
        cfg.window_end = values.get("window.end")
        for key in cls._TABLE_KEYS:
            if f"tables.{key}" in values:
                cfg.tables[key] = Path(values[f"tables.{key}"])
        return cfg

    @staticmethod
    def _bool(text: str) -> bool:
        lowered = text.strip().lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"not a boolean: {text!r}")

    def table_text(self, key: str) -> str:
        """Contents of a configured table, falling back to the shipped
        defaults where one exists."""
        if key in self.tables:
            return Path(self.tables[key]).read_text(encoding="utf-8")
        packaged = {
            "tld_groups": "tld_groups.csv",
            "free_providers": "free_providers.txt",
            "brand_list": "brands.txt",
            "algorithm_policy": "dnssec_algorithms.csv",
            "regions": "regions.csv",
            "confusables": "confusables.csv",
        }
        if key in packaged:
            ref = resources.files("dnsabuse.data").joinpath(packaged[key])
            return ref.read_text(encoding="utf-8")
        raise ConfigError(f"no table configured for {key!r} "
                          f"(set tables.{key} in the config)")

    def config_hash(self) -> str:
        digest = hashlib.sha256()
        for key in sorted(self.raw):
            digest.update(f"{key}={self.raw[key]}\n".encode("utf-8"))
        return digest.hexdigest()[:16]


def packaged_table(name: str) -> str:
    """Direct access to a shipped data file (tests and defaults)."""
    return resources.files("dnsabuse.data").joinpath(name).read_text(encoding="utf-8")
