"""Politeness plumbing for active scans: token buckets keyed by
destination, and the opt-out list honored before any probe leaves.
"""

from __future__ import annotations

import ipaddress
import threading
import time
from typing import Dict, Iterable, Optional


class TokenBucket:
    """Classic token bucket; acquire() blocks until a token is free."""

    def __init__(self, rate_per_second: float, burst: Optional[float] = None,
                 clock=time.monotonic, sleep=time.sleep):
        if rate_per_second <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_second
        self.capacity = burst if burst is not None else max(1.0, rate_per_second)
        self._tokens = self.capacity
        self._updated = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock()
        self._tokens = min(self.capacity,
                           self._tokens + (now - self._updated) * self.rate)
        self._updated = now

    def try_acquire(self) -> bool:
        with self._lock:
            self._refill()
            if self._tokens >= 1.0:
                self._tokens -= 1.0
                return True
            return False

    def acquire(self) -> None:
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class PerKeyRateLimiter:
    """One bucket per key (endpoint host, /24 network, ...)."""

    def __init__(self, rate_per_second: float, burst: Optional[float] = None,
                 clock=time.monotonic, sleep=time.sleep):
        self.rate = rate_per_second
        self.burst = burst
        self._clock = clock
        self._sleep = sleep
        self._buckets: Dict[str, TokenBucket] = {}
        self._lock = threading.Lock()

    def bucket(self, key: str) -> TokenBucket:
        with self._lock:
            if key not in self._buckets:
                self._buckets[key] = TokenBucket(self.rate, self.burst,
                                                 clock=self._clock,
                                                 sleep=self._sleep)
            return self._buckets[key]

    def acquire(self, key: str) -> None:
        self.bucket(key).acquire()


def network_key(ip: str, v4_prefix: int = 24, v6_prefix: int = 48) -> str:
    """Rate-limit grouping key: the /24 (or /48) containing the target."""
    addr = ipaddress.ip_address(ip)
    prefix = v4_prefix if addr.version == 4 else v6_prefix
    return str(ipaddress.ip_network(f"{ip}/{prefix}", strict=False))


class OptOutList:
    """Networks that asked not to be scanned; checked before probing."""

    def __init__(self, networks: Iterable[str] = ()):
        self.networks = [ipaddress.ip_network(n.strip(), strict=False)
                         for n in networks if n.strip() and not n.startswith("#")]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "OptOutList":
        return cls(lines)

    def excluded(self, ip: str) -> bool:
        addr = ipaddress.ip_address(ip)
        return any(addr in network for network in self.networks
                   if network.version == addr.version)
