import pytest
from hypothesis import given
from hypothesis import strategies as st

from kbqa.kb import (
    DATETIME,
    NUMERIC,
    Denotation,
    KnowledgeBase,
    Literal,
    LiteralTagError,
    LoadError,
    Triple,
    invert,
    load_kb,
)
from kbqa.synth import random_kb, random_literal

import oracles


# -- loading ---------------------------------------------------------------------

SMALL_TSV = (
    "a\tr\tb\n"
    "a\ttype.object.type\tC1\n"
    "b\tr2\t3.5^numeric\n"
)


def test_load_smallest_mixed_input():
    kb = load_kb(SMALL_TSV)
    assert len(kb.triples) == 2
    assert kb.class_assertions == {"a": frozenset({"C1"})}
    meta = kb.relation_meta["r2"]
    assert meta.has_literals and meta.literal_tag == NUMERIC


def test_load_empty_stream():
    kb = load_kb("")
    assert len(kb.triples) == 0
    assert kb.outgoing_relations({"anything"}) == set()
    assert kb.join_neighbors({"x"}, "r") == Denotation.entity_set(())
    assert kb.classes_of({"x"}) == set()


def test_load_malformed_record_carries_line_number():
    with pytest.raises(LoadError) as err:
        load_kb("a\tr\tb\nbroken line without tabs\n")
    assert err.value.line_no == 2


def test_load_rejects_stored_inverse_predicate():
    with pytest.raises(LoadError):
        load_kb("a\tr_inv\tb\n")


def test_load_n_triples_subset():
    text = (
        "<a> <r> <b> .\n"
        '<a> <r2> "3.5"^^numeric .\n'
        '<a> <r3> "2015-08-10"^^datetime .\n'
        "<a> <type.object.type> <C1> .\n"
    )
    kb = load_kb(text, "n-triples-subset")
    assert len(kb.triples) == 3
    assert kb.class_assertions["a"] == frozenset({"C1"})
    assert Literal.datetime("2015-08-10") in kb.join_neighbors({"a"}, "r3").members


def test_load_tsv_escapes():
    kb = load_kb("a\tr\thas\\ttab^string\n")
    lit = next(iter(kb.join_neighbors({"a"}, "r").members))
    assert lit.value == "has\ttab"


def test_load_mixed_tags_warns_and_restricts():
    kb = load_kb("a\tr\t3^numeric\nb\tr\t2015^datetime\n")
    assert kb.relation_meta["r"].mixed_tags
    assert kb.warnings
    # comparisons only touch matching-tag triples
    assert kb.comparative_relations(Literal.numeric("5"), "lt") == {"r"}
    assert kb.comparative_relations(Literal.datetime("2020"), "lt") == {"r"}


def test_load_deduplicates_triples():
    kb = load_kb("a\tr\tb\na\tr\tb\n")
    assert len(kb.triples) == 1


# -- literals ----------------------------------------------------------------------

def test_numeric_literal_canonicalization():
    assert Literal.numeric("3.50") == Literal.numeric("3.5")
    assert Literal.numeric("100").text() == "100"
    assert Literal.numeric("0.50").text() == "0.5"


def test_datetime_precision_intervals():
    year = Literal.datetime("2015")
    date = Literal.datetime("2015-08-10")
    # 2015 neither strictly precedes nor equals a day inside it
    assert not year.compare("lt", date)
    assert not year.compare("gt", date)
    assert year != date
    assert Literal.datetime("2014").compare("lt", date)
    assert date.compare("lt", Literal.datetime("2016"))
    assert date.compare("le", Literal.datetime("2015-08-10"))


def test_cross_tag_comparison_raises():
    with pytest.raises(LiteralTagError):
        Literal.numeric("1").compare("lt", Literal.datetime("2015"))
    with pytest.raises(LiteralTagError):
        Literal.string("x").compare("lt", Literal.string("y"))


def test_cross_tag_equality_is_false_not_error():
    assert Literal.numeric("2015") != Literal.datetime("2015")


def test_comparative_relations_rejects_strings():
    kb = load_kb(SMALL_TSV)
    with pytest.raises(LiteralTagError):
        kb.comparative_relations(Literal.string("x"), "lt")


@given(st.integers(1000, 2999), st.integers(1, 12), st.integers(1, 28))
def test_datetime_text_roundtrip(y, m, d):
    for text in (f"{y:04d}", f"{y:04d}-{m:02d}", f"{y:04d}-{m:02d}-{d:02d}"):
        assert Literal.datetime(text).text() == text


# -- index soundness ------------------------------------------------------------------

def _rebuild_indexes(kb: KnowledgeBase):
    spo, ops, pidx = {}, {}, {}
    for t in kb.triples:
        spo.setdefault(t.subject, {}).setdefault(t.predicate, set()).add(t.object)
        ops.setdefault(t.object, {}).setdefault(t.predicate, set()).add(t.subject)
        pidx.setdefault(t.predicate, []).append(t)
    return spo, ops, pidx


def test_index_rebuild_matches_incremental(rng):
    kb = random_kb(rng, n_entities=40, n_relations=9, n_triples=200)
    spo, ops, pidx = _rebuild_indexes(kb)
    assert spo == kb.spo
    assert ops == kb.ops
    # and at a few thousand triples
    kb = random_kb(rng, n_entities=300, n_relations=15, n_triples=5000)
    spo, ops, pidx = _rebuild_indexes(kb)
    assert spo == kb.spo
    assert ops == kb.ops
    assert {p: set(v) for p, v in pidx.items()} == {
        p: set(v) for p, v in kb.by_predicate.items()
    }


def test_index_soundness_exhaustive(rng):
    kb = random_kb(rng, n_triples=150)
    for t in kb.triples:
        assert t.object in kb.spo[t.subject][t.predicate]
        assert t.subject in kb.ops[t.object][t.predicate]
        assert t in kb.by_predicate[t.predicate]
    for s, by_pred in kb.spo.items():
        for p, objs in by_pred.items():
            for o in objs:
                assert Triple(s, p, o) in set(kb.triples)


# -- query operations vs full-scan oracles ----------------------------------------------

def _random_heads(rng, kb, allow_literals=False):
    pool = sorted(kb.entities)
    heads = set(rng.sample(pool, min(len(pool), rng.randint(0, 4))))
    if allow_literals:
        lits = sorted(
            {t.object for t in kb.triples if isinstance(t.object, Literal)},
            key=Literal.sort_key,
        )
        if lits and rng.random() < 0.5:
            heads.add(rng.choice(lits))
    return heads


def test_query_ops_match_scan_oracles_randomized(rng):
    for trial in range(60):
        kb = random_kb(rng, n_entities=25, n_relations=7, n_triples=rng.randint(0, 150))
        relations = sorted(kb.relations()) or ["missing.rel"]
        for _ in range(20):
            heads = _random_heads(rng, kb, allow_literals=True)
            assert kb.outgoing_relations(heads) == oracles.scan_outgoing(kb, heads)
            r = rng.choice(relations)
            direction = invert(r) if rng.random() < 0.5 else r
            got = kb.join_neighbors(heads, direction)
            assert got.members == frozenset(oracles.scan_join(kb, heads, direction))
            entity_heads = {h for h in heads if isinstance(h, str)}
            assert kb.classes_of(entity_heads) == oracles.scan_classes_of(kb, entity_heads)
            assert kb.numeric_relations(entity_heads) == oracles.scan_numeric_relations(
                kb, entity_heads
            )
            for temporal in (False, True):
                assert kb.constraint_pairs(
                    entity_heads, temporal
                ) == oracles.scan_constraint_pairs(kb, entity_heads, temporal)
            value = random_literal(rng, rng.choice((NUMERIC, DATETIME)))
            op = rng.choice(("lt", "le", "gt", "ge"))
            assert kb.comparative_relations(value, op) == oracles.scan_comparative(
                kb, value, op
            )


def test_inverse_duality(rng):
    for _ in range(20):
        kb = random_kb(rng, n_triples=120)
        entity_rels = [r for r, m in kb.relation_meta.items() if m.entity_objects]
        for r in entity_rels:
            for t in kb.by_predicate[r]:
                if isinstance(t.object, str):
                    assert t.object in kb.join_neighbors({t.subject}, r).members
                    assert t.subject in kb.join_neighbors({t.object}, invert(r)).members


def test_join_literal_heads_match_by_value():
    kb = load_kb("w1\talcohol\t13.5^numeric\nw2\talcohol\t13.50^numeric\n")
    got = kb.join_neighbors({Literal.numeric("13.5")}, "alcohol_inv")
    assert got.members == frozenset({"w1", "w2"})


def test_determinism_across_loads():
    blob = "".join(f"e{i}\tr{i % 3}\te{(i * 7) % 11}\n" for i in range(50))
    kb1, kb2 = load_kb(blob), load_kb(blob)
    assert kb1.stats() == kb2.stats()
    assert kb1.outgoing_relations({"e1"}) == kb2.outgoing_relations({"e1"})
    assert [t for t in kb1.triples] == [t for t in kb2.triples]


def test_fragment_outgoing_relations_count(wine_kb):
    # the packaged fragment mirrors the running example: exactly four
    # traversable relations around the seed region
    rels = wine_kb.outgoing_relations({"Tulum_Valley"})
    assert len(rels) == 4
    assert "wine.wine.wine_sub_region_inv" in rels


def test_fragment_constraint_pairs(people_kb):
    children = people_kb.join_neighbors({"Elie_Wiesel"}, "people.person.children")
    pairs = people_kb.constraint_pairs(children.members)
    assert ("people.person.gender", "Male") in pairs


@given(
    st.decimals(allow_nan=False, allow_infinity=False, places=3),
    st.decimals(allow_nan=False, allow_infinity=False, places=3),
)
def test_numeric_ordering_matches_decimal(a, b):
    la, lb = Literal(NUMERIC, a.normalize()), Literal(NUMERIC, b.normalize())
    assert la.compare("lt", lb) == (a < b)
    assert la.compare("le", lb) == (a <= b)
    assert la.compare("gt", lb) == (a > b)
    assert la.compare("ge", lb) == (a >= b)


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=30))
def test_tsv_escape_roundtrip_for_string_literals(text):
    from kbqa.kb import _escape_tsv, _unescape_tsv

    assert _unescape_tsv(_escape_tsv(text)) == text


def test_comparative_relations_boundary_values(rng):
    kb = random_kb(rng, n_triples=150)
    numeric_values = [
        t.object
        for t in kb.triples
        if isinstance(t.object, Literal) and t.object.tag == NUMERIC
    ]
    if not numeric_values:
        kb = load_kb("a\tr.n\t5^numeric\n")
        numeric_values = [Literal.numeric("5")]
    smallest = min(numeric_values, key=lambda l: l.value)
    assert kb.comparative_relations(smallest, "lt") == set()
    huge = Literal.numeric("9" * 30)
    expected = {
        t.predicate
        for t in kb.triples
        if isinstance(t.object, Literal) and t.object.tag == NUMERIC
    }
    assert kb.comparative_relations(huge, "lt") == expected


def test_numeric_relations_entity_only_heads():
    kb = load_kb("a\tr.e\tb\nb\tr.e\tc\n")
    assert kb.numeric_relations({"a", "b"}) == set()


def test_dump_load_roundtrip(rng):
    from io import StringIO

    from kbqa.kb import dump_tsv

    kb = random_kb(rng, n_entities=25, n_relations=8, n_triples=180)
    buf = StringIO()
    dump_tsv(kb, buf)
    reloaded = load_kb(buf.getvalue())
    assert set(reloaded.triples) == set(kb.triples)
    assert reloaded.class_assertions == kb.class_assertions
    assert reloaded.stats() == kb.stats()
