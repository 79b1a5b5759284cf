import pytest
from hypothesis import given, strategies as st

from dnsabuse.domains import (
    NotADomain,
    NotARegistrableDomain,
    SuffixListError,
    TldGroup,
    classify_tld,
    extract_fqdn,
    extract_registered_domain,
    load_suffix_rules,
    load_suffix_set,
    load_tld_groups,
    suffix_match,
)

RULES = load_suffix_rules("com\npl\ncom.pl\nck\n*.ck\n!www.ck\nwork\ntest\nexample\nio")


def test_load_counts_rules():
    rules = load_suffix_rules("com\npl\ncom.pl")
    assert len(rules) == 3


def test_comment_lines_skipped():
    rules = load_suffix_rules("// comment\ncom")
    assert len(rules) == 1


def test_private_section_ignored():
    text = (
        "// ===BEGIN ICANN DOMAINS===\n"
        "com\n"
        "// ===END ICANN DOMAINS===\n"
        "// ===BEGIN PRIVATE DOMAINS===\n"
        "000webhostapp.com\n"
        "// ===END PRIVATE DOMAINS===\n"
    )
    rules = load_suffix_rules(text)
    assert len(rules) == 1
    # the private suffix must not influence extraction
    assert extract_registered_domain("x.000webhostapp.com", rules).name == \
        "000webhostapp.com"


def test_malformed_rule_names_line():
    with pytest.raises(SuffixListError, match="line 2"):
        load_suffix_rules("com\n.bad.\n")


def test_wildcard_and_exception_hand_evaluated():
    # hand evaluation: "foo.ck" is itself a wildcard-matched public
    # suffix, so nothing is registrable at that depth; "www.ck" is the
    # exception, registrable directly under ck
    rules = load_suffix_rules("ck\n*.ck\n!www.ck")
    with pytest.raises(NotARegistrableDomain):
        extract_registered_domain("foo.ck", rules)
    assert extract_registered_domain("a.foo.ck", rules).name == "a.foo.ck"
    www = extract_registered_domain("www.ck", rules)
    assert www.name == "www.ck"
    assert www.public_suffix == "ck"


def test_exception_beats_wildcard_below():
    rules = load_suffix_rules("ck\n*.ck\n!www.ck")
    assert extract_registered_domain("a.www.ck", rules).name == "www.ck"


def test_url_example_from_blacklist_feed():
    rd = extract_registered_domain("http://example.com.pl/paypal-account.php", RULES)
    assert rd.name == "example.com.pl"
    assert rd.public_suffix == "com.pl"
    assert rd.tld == "pl"


def test_fqdn_strips_subdomain():
    assert extract_registered_domain("malicious.example.com", RULES).name == \
        "example.com"


def test_identity_case():
    assert extract_registered_domain("example.com", RULES).name == "example.com"


def test_ip_literal_rejected():
    with pytest.raises(NotADomain):
        extract_registered_domain("192.0.2.7", RULES)
    with pytest.raises(NotADomain):
        extract_registered_domain("http://192.0.2.7/x.php", RULES)


def test_bare_suffix_rejected():
    with pytest.raises(NotARegistrableDomain):
        extract_registered_domain("com.pl", RULES)


def test_empty_host_is_error():
    with pytest.raises(Exception):
        extract_registered_domain("http:///path", RULES)


def test_unlisted_tld_uses_default_rule():
    rd = extract_registered_domain("host.sub.zz-unlisted", RULES)
    assert rd.public_suffix == "zz-unlisted"
    assert rd.name == "sub.zz-unlisted"


def test_idn_normalized_to_punycode():
    rules = load_suffix_rules("xn--p1ai")
    assert extract_registered_domain("сайт.рф", rules).name == \
        "xn--80aswg.xn--p1ai"
    assert extract_registered_domain("xn--80aswg.xn--p1ai", rules).name == \
        "xn--80aswg.xn--p1ai"


def test_label_count_invariant():
    rd = extract_registered_domain("deep.sub.example.com.pl", RULES)
    assert len(rd.name.split(".")) == len(rd.public_suffix.split(".")) + 1


def test_fqdn_wraps_registered():
    fq = extract_fqdn("http://a.b.example.com/x", RULES)
    assert fq.name == "a.b.example.com"
    assert fq.registered.name == "example.com"
    assert fq.name.endswith(fq.registered.name)


_LABEL = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789", min_size=1,
                 max_size=8)


@given(st.lists(_LABEL, min_size=2, max_size=5))
def test_extraction_is_idempotent(labels):
    host = ".".join(labels)
    try:
        once = extract_registered_domain(host, RULES)
    except (NotADomain, NotARegistrableDomain):
        return
    twice = extract_registered_domain(once.name, RULES)
    assert twice.name == once.name


GROUPS = load_tld_groups("tld,group\ncom,legacy_gtld\nnl,eu_cctld\n"
                         "xyz,new_gtld\nno,other_european_cctld")


def test_classify_tld_table_hits():
    assert classify_tld("com", GROUPS) is TldGroup.LEGACY_GTLD
    assert classify_tld("nl", GROUPS) is TldGroup.EU_CCTLD
    assert classify_tld("xyz", GROUPS) is TldGroup.NEW_GTLD


def test_classify_tld_defaults():
    assert classify_tld("zz", GROUPS) is TldGroup.OTHER_CCTLD
    assert classify_tld("verylongnewtld", GROUPS) is TldGroup.NEW_GTLD


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=12))
def test_classify_tld_is_total(tld):
    assert classify_tld(tld, GROUPS) in TldGroup


def test_suffix_match_label_boundaries():
    providers = load_suffix_set(["000webhostapp.com", "ngrok.io"])
    assert suffix_match("evil.000webhostapp.com", providers) == "000webhostapp.com"
    assert suffix_match("000webhostapp.com", providers) == "000webhostapp.com"
    assert suffix_match("not000webhostapp.com", providers) is None


def test_host_extraction_with_userinfo_and_port():
    assert extract_registered_domain("http://user:pw@example.com:8443/x", RULES).name \
        == "example.com"
    assert extract_registered_domain("example.com:8080/path", RULES).name \
        == "example.com"
    assert extract_registered_domain("admin@mail.example.com/q", RULES).name \
        == "example.com"


def test_trailing_dot_accepted():
    assert extract_registered_domain("example.com.", RULES).name == "example.com"


def test_ipv6_literal_rejected():
    with pytest.raises(NotADomain):
        extract_registered_domain("http://[2001:db8::1]/x", RULES)
