import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nerh.conll_io import Sentence, TaggedCorpus, Token
from nerh.mapping import (ADJACENCY_POLICY, MappingError, MappingRule, MappingRuleSet,
                          UnmappedPolicy, apply_ruleset, default_ruleset, identity_ruleset,
                          parse_ruleset, tag_inventory)
from nerh.tagscheme import TagScheme, to_spans, validate_sequence
from nerh.taxonomy import Taxonomy, default_taxonomy
from oracles import bio_spans_bruteforce, random_layout, render_bio

TAX = default_taxonomy()


def corpus(*sents):
    """sents: (source, [tags]) pairs; surfaces are generated."""
    out = [Sentence(tuple(Token(f"w{i}", t) for i, t in enumerate(tags)), src)
           for src, tags in sents]
    return TaggedCorpus(tuple(out), TagScheme.BIO, frozenset(src for src, _ in sents))


def tags_of(c):
    return [list(s.tags) for s in c.sentences]


def test_parse_ruleset_examples():
    rs = parse_ruleset("DNRTI\tHackOrg\tThreat-Actor\n", TAX)
    assert rs.rules == (MappingRule("DNRTI", "HackOrg", "Threat-Actor"),)
    rs = parse_ruleset("APTNER\tMD5\tFile\t# SCO mapping\n", TAX)
    assert rs.rules[0].target == "File" and rs.rules[0].note == "SCO mapping"
    rs = parse_ruleset("# header\n\nAttacker\tIMPACT\tO\n", TAX)
    assert len(rs.rules) == 1 and rs.rules[0].excludes


@pytest.mark.parametrize("text, message", [
    ("A\tX\tNotAType\n", "line 1.*unknown target"),
    ("A\tX\tMalware\nA\tX\tTool\n", "line 2.*duplicate.*line 1"),
    ("\nA X Malware\n", "line 2"),
    ("A\t\tMalware\n", "line 1"),
])
def test_parse_ruleset_errors(text, message):
    with pytest.raises(MappingError, match=message):
        parse_ruleset(text, TAX)


def test_ruleset_rejects_duplicate_keys_and_round_trips():
    with pytest.raises(MappingError):
        MappingRuleSet((MappingRule("A", "X", "Tool"), MappingRule("A", "X", "Malware")))
    rs = default_ruleset()
    assert parse_ruleset(rs.serialize(), TAX) == rs


def test_unmapped_policy_parse():
    assert UnmappedPolicy.parse("error") is UnmappedPolicy.ERROR
    assert UnmappedPolicy.parse("to-outside") is UnmappedPolicy.TO_OUTSIDE
    assert UnmappedPolicy.parse("outside") is UnmappedPolicy.TO_OUTSIDE
    with pytest.raises(ValueError):
        UnmappedPolicy.parse("drop")


@pytest.mark.parametrize("source, before, after", [
    ("DNRTI", ["B-HackOrg", "I-HackOrg"], ["B-Threat-Actor", "I-Threat-Actor"]),
    ("APTNER", ["B-APT", "O"], ["B-Threat-Actor", "O"]),
    ("APTNER", ["B-SHA2"], ["B-File"]),
    ("APTNER", ["O", "B-MD5"], ["O", "B-File"]),
    ("Attacker", ["B-IMPACT", "I-IMPACT", "O"], ["O", "O", "O"]),
    ("APTNER", ["B-S", "B-MAL"], ["O", "B-Malware"]),
    ("DNRTI", ["B-Exp"], ["B-Vulnerability"]),
    ("APTNER", ["B-IP"], ["B-IPv4-Addr"]),
    ("CyNER", ["B-System", "I-System"], ["B-Software", "I-Software"]),
])
def test_default_ruleset_examples(source, before, after):
    mapped, _ = apply_ruleset(corpus((source, before)), default_ruleset(), TAX)
    assert tags_of(mapped) == [after]


def test_exclusion_never_leaves_orphan_inside():
    rs = parse_ruleset("A\tX\tO\nA\tY\tTool\n", TAX)
    mapped, report = apply_ruleset(corpus(("A", ["B-X", "I-X", "B-Y", "I-Y"])), rs, TAX)
    assert tags_of(mapped) == [["O", "O", "B-Tool", "I-Tool"]]
    assert report.excluded_tokens == 2 and report.spans_removed == 1


def test_adjacent_consolidated_spans_keep_boundaries():
    rs = parse_ruleset("A\tAPT\tThreat-Actor\nA\tHackOrg\tThreat-Actor\n", TAX)
    c = corpus(("A", ["B-APT", "B-HackOrg"]))
    mapped, report = apply_ruleset(c, rs, TAX)
    assert tags_of(mapped) == [["B-Threat-Actor", "B-Threat-Actor"]]
    assert report.spans_before == report.spans_after == 2
    assert report.adjacent_same_type == 1
    js = report.to_json()
    assert js["adjacency_policy"] == ADJACENCY_POLICY
    assert js["adjacent_same_type_unmerged"] == 1


def test_unmapped_errors_and_outside_mode():
    rs = parse_ruleset("A\tX\tTool\n", TAX)
    c = corpus(("A", ["B-X", "B-Q", "I-Q"]))
    with pytest.raises(MappingError, match="'Q'.*'A'"):
        apply_ruleset(c, rs, TAX)
    mapped, report = apply_ruleset(c, rs.with_policy(UnmappedPolicy.TO_OUTSIDE), TAX)
    assert tags_of(mapped) == [["B-Tool", "O", "O"]]
    assert report.unmapped == {("A", "Q")} and report.unmapped_tokens == 2
    assert report.to_json()["unmapped"] == [["A", "Q"]]


def test_source_without_rules_is_an_error():
    rs = parse_ruleset("A\tX\tTool\n", TAX)
    with pytest.raises(MappingError, match="no rules for source.*B"):
        apply_ruleset(corpus(("A", ["O"]), ("B", ["O"])), rs, TAX)


def test_target_outside_taxonomy_is_rejected_at_apply():
    rs = MappingRuleSet((MappingRule("A", "X", "Custom"),))
    with pytest.raises(MappingError, match="not in the taxonomy"):
        apply_ruleset(corpus(("A", ["B-X"])), rs, TAX)


def test_bioes_corpus_rejected():
    c = TaggedCorpus((Sentence((Token("a", "S-X"),), "A"),), TagScheme.BIOES, frozenset("A"))
    with pytest.raises(MappingError, match="BIO"):
        apply_ruleset(c, parse_ruleset("A\tX\tTool\n", TAX), TAX)


def test_identity_ruleset():
    c = corpus(("A", ["B-MAL", "O", "B-APT"]), ("B", ["B-MAL"]), ("C", ["O"]))
    rs = identity_ruleset(c)
    assert sorted((r.source_dataset, r.source_type) for r in rs.rules) == \
        [("A", "APT"), ("A", "MAL"), ("B", "MAL")]
    assert all(r.source_type == r.target for r in rs.rules)
    mapped, report = apply_ruleset(c, rs, rs.target_taxonomy())
    assert mapped == c
    assert report.spans_before == report.spans_after == 3
    assert set(rs.target_taxonomy()) == {"MAL", "APT"}


def test_tag_inventory():
    c = corpus(("A", ["B-MAL", "I-MAL", "B-APT"]), ("B", ["B-MAL"]))
    assert tag_inventory(c) == {"MAL": 2, "APT": 1}


# ---- conservation property

def random_case(rng: random.Random):
    src_types = ["X", "Y", "Z", "Threat-Actor"]
    sources = ["S1", "S2"]
    targets = ["Malware", "Tool", "File", "O"]
    rules = [MappingRule(s, t, rng.choice(targets)) for s in sources for t in src_types
             if rng.random() < 0.8]
    policy = UnmappedPolicy.TO_OUTSIDE
    sents = []
    for _ in range(rng.randint(1, 8)):
        length, spans = random_layout(rng, types=src_types)
        sents.append((rng.choice(sources), render_bio(length, spans)))
    return corpus(*sents), MappingRuleSet(tuple(rules), policy)


def check_conservation(c, rs, tax):
    mapped, report = apply_ruleset(c, rs, tax)
    assert len(mapped) == len(c)
    for a, b in zip(c.sentences, mapped.sentences):
        assert a.surfaces == b.surfaces and a.source == b.source
        assert validate_sequence(b.tags, TagScheme.BIO) == []
        before = {(s, e) for _, s, e in bio_spans_bruteforce(list(a.tags))}
        after = {(s, e) for _, s, e in bio_spans_bruteforce(list(b.tags))}
        assert after <= before
    out_types = {s.entity_type for sent in mapped.sentences
                 for s in to_spans(sent.tags, TagScheme.BIO)}
    assert out_types <= set(tax)
    assert report.spans_before == report.spans_after + report.spans_removed
    entity_tokens = sum(t != "O" for s in c.sentences for t in s.tags)
    assert sum(report.applied_tokens.values()) + report.unmapped_tokens == entity_tokens
    kept = sum(t != "O" for s in mapped.sentences for t in s.tags)
    assert kept + report.excluded_tokens == entity_tokens


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_mapping_conservation_property(seed):
    c, rs = random_case(random.Random(seed))
    check_conservation(c, rs, TAX)
