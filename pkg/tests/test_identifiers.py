import re
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshkit.errors import MalformedPid, UnknownPid, UnsupportedScheme
from meshkit.identifiers import (
    Minter,
    Pid,
    ResolutionRecord,
    ResolverTable,
    Scheme,
    mint_pid,
    parse_pid,
    resolve_pid,
)

# grammar restated independently of the implementation's regexes
CANONICAL = re.compile(r"^(doi|guid|ark|mesh):[a-z0-9.-]+/[!-~]+$")
UUID_SUFFIX = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")

namespaces = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789.-", min_size=1, max_size=20)
suffixes = st.text(alphabet=st.characters(min_codepoint=0x21, max_codepoint=0x7E), min_size=1, max_size=40)
pids = st.builds(Pid, st.sampled_from(list(Scheme)), namespaces, suffixes)


def test_mint_twice_distinct():
    m = Minter()
    a, b = m.mint(Scheme.GUID, "nodeA"), m.mint(Scheme.GUID, "nodeA")
    assert a != b and a.suffix != b.suffix


def test_mint_mesh_matches_canonical_grammar():
    pid = mint_pid(Scheme.MESH, "demo-mesh")
    text = str(pid)
    assert CANONICAL.match(text)
    assert text.startswith("mesh:demo-mesh/")
    assert len(pid.suffix) == 36 and UUID_SUFFIX.match(pid.suffix)


@pytest.mark.parametrize("scheme", ["doi", "ark"])
def test_mint_foreign_scheme_rejected(scheme):
    with pytest.raises(UnsupportedScheme):
        mint_pid(scheme, "10.5555")


def test_mint_empty_namespace():
    with pytest.raises(MalformedPid):
        Minter().mint("guid", "")


@pytest.mark.parametrize(
    "text,expected",
    [
        ("doi:10.5555/abc123", Pid(Scheme.DOI, "10.5555", "abc123")),
        ("mesh:demo-mesh/xyz", Pid(Scheme.MESH, "demo-mesh", "xyz")),
        ("DOI:10.5555/AbC", Pid(Scheme.DOI, "10.5555", "AbC")),
        ("ark:13030/tf5p30086k/sub/part", Pid(Scheme.ARK, "13030", "tf5p30086k/sub/part")),
    ],
)
def test_parse_grammar_cases(text, expected):
    assert parse_pid(text) == expected


@pytest.mark.parametrize("text", ["not-a-pid", "foo:bar/baz", "doi:/x", "doi:10.5555/", ":a/b", "doi:10.5555",
                                  "guid:Bad Space/x", "guid:ns/has space"])
def test_parse_malformed(text):
    with pytest.raises(MalformedPid):
        parse_pid(text)


def test_equality_case_rules():
    assert parse_pid("GUID:NodeA/x") == parse_pid("guid:nodea/x")
    assert parse_pid("guid:nodea/X") != parse_pid("guid:nodea/x")


@settings(max_examples=300)
@given(pids)
def test_round_trip_property(p):
    assert parse_pid(str(p)) == p
    assert CANONICAL.match(str(p))


def test_concurrent_minting_unique():
    m = Minter()
    out: list[Pid] = []
    lock = threading.Lock()

    def work():
        local = [m.mint("guid", "nodea") for _ in range(2000)]
        with lock:
            out.extend(local)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(out) == len(set(out)) == 16000 == len(m)


def test_resolve_round_trip_and_unknown():
    table = ResolverTable()
    primary = parse_pid("guid:nodea/s1")
    mesh = mint_pid("mesh", "demo-mesh")
    table.register(ResolutionRecord(mesh, "nodeA", "http://nodea", primary))
    table.register(ResolutionRecord(primary, "nodeA", "http://nodea"))
    rec = resolve_pid(mesh, table)
    assert rec.hosting_platform_id == "nodeA" and rec.primary_platform_pid == primary
    assert resolve_pid("guid:nodea/s1", table).primary_platform_pid is None
    with pytest.raises(UnknownPid):
        resolve_pid("guid:nodea/nope", ResolverTable())


def test_mesh_resolution_requires_primary():
    with pytest.raises(ValueError):
        ResolutionRecord(mint_pid("mesh", "m"), "nodeA", "http://x", None)
    rec = ResolutionRecord(mint_pid("mesh", "m"), "nodeA", "http://x", parse_pid("guid:a/b"))
    assert ResolutionRecord.from_json(rec.to_json()) == rec
