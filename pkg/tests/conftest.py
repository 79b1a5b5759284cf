import time

import pytest

from dnsabuse.fixtures import DnsFixtureServer, SignedHierarchy
from dnsabuse.resolver import StubResolver

NOW = int(time.time())

PRESENCE_COMBOS = {
    # label -> (publish_ds, publish_dnskey, publish_rrsig)
    "plain": (False, False, False),
    "ds-only": (True, False, False),
    "key-only": (False, True, False),
    "sig-only": (False, False, True),
    "ds-key": (True, True, False),
    "ds-sig": (True, False, True),
    "island": (False, True, True),
    "full": (True, True, True),
}


@pytest.fixture(scope="session")
def signed_world():
    """One signed root/tld hierarchy serving every presence combination
    plus tampered/expired/denial variants; reused across tests because
    key generation and signing dominate fixture cost."""
    hierarchy = SignedHierarchy(tld="test", now=NOW)
    domains = {}
    for label, (ds, key, sig) in PRESENCE_COMBOS.items():
        domains[label] = hierarchy.add_domain(
            label, publish_ds=ds, publish_dnskey=key, publish_rrsig=sig)
    domains["tampered"] = hierarchy.add_domain("tampered", tamper=True)
    domains["expired"] = hierarchy.add_domain("expired", expired=True)
    domains["nsec"] = hierarchy.add_domain("nsec", denial="nsec")
    domains["nsec3"] = hierarchy.add_domain("nsec3", denial="nsec3")
    server = DnsFixtureServer(hierarchy.zone).start()
    yield hierarchy, domains, server
    server.stop()


@pytest.fixture
def signed_resolver(signed_world):
    _, _, server = signed_world
    return StubResolver(server=server.address, timeout=1.0, retries=0,
                        checking_disabled=True)
