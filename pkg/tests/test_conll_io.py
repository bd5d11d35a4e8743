import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nerh.conll_io import (CorpusFormatError, CorpusReader, FormatConfig, IssueAction,
                           IssueKind, Sentence, TaggedCorpus, Token, clean_corpus, load_stoplist,
                           parse_corpus, provenance_path, read_corpus, serialize_corpus,
                           write_corpus)
from nerh.tagscheme import TagScheme


def corpus_of(*sentences, source="S", scheme=TagScheme.BIO):
    sents = [Sentence(tuple(Token(w, t) for w, t in s), source) for s in sentences]
    return TaggedCorpus(tuple(sents), scheme, frozenset([source]))


def structure(corpus):
    return [[(t.surface, t.tag) for t in s.tokens] for s in corpus.sentences]


def test_parse_basic():
    corpus, issues = parse_corpus("Emotet B-Malware\nspreads O\n\nIt O", source_id="APTNER")
    assert structure(corpus) == [[("Emotet", "B-Malware"), ("spreads", "O")], [("It", "O")]]
    assert issues == []
    assert corpus.sources == {"APTNER"}
    assert [s.origin_line for s in corpus.sentences] == [1, 4]


def test_parse_single_column_line_is_skipped():
    text = "Emotet B-Malware\nB-Malware\nspreads O\n"
    reader = CorpusReader(FormatConfig(), "S")
    corpus, issues = reader.read(text)
    assert structure(corpus) == [[("Emotet", "B-Malware"), ("spreads", "O")]]
    assert len(issues) == 1
    assert issues[0].line == 2
    assert issues[0].kind is IssueKind.WRONG_COLUMN_COUNT
    assert issues[0].action_taken is IssueAction.SKIPPED
    assert reader.counts.to_json() == {"total_lines": 3, "tokens_parsed": 2, "lines_skipped": 1,
                                       "blank_lines": 0, "docstart_lines": 0}


def test_parse_error_mode_aborts_with_line_number():
    with pytest.raises(CorpusFormatError, match="line 2"):
        parse_corpus("a O\nbroken\n", FormatConfig(on_malformed="error"))


def test_parse_empty_input():
    corpus, issues = parse_corpus("")
    assert len(corpus) == 0 and issues == []


def test_parse_blank_runs_and_docstart():
    text = "-DOCSTART- -X- O O\n\n\na x O\n\n\n\nb y O\n"
    reader = CorpusReader(FormatConfig(), "S")
    corpus, issues = reader.read(text)
    assert structure(corpus) == [[("a", "O")], [("b", "O")]]
    # blank right after DOCSTART is expected; the others are stray
    assert [(i.line, i.kind) for i in issues] == [(3, IssueKind.ORPHAN_BLANK),
                                                  (6, IssueKind.ORPHAN_BLANK),
                                                  (7, IssueKind.ORPHAN_BLANK)]
    c = reader.counts
    assert (c.total, c.tokens, c.skipped, c.blank, c.docstart) == (8, 2, 0, 5, 1)


def test_parse_tab_mode_issues():
    text = "\tB-X\nfoo\t\nNew York\tB-LOC\nok\tO\n"
    corpus, issues = parse_corpus(text, FormatConfig(column_separator="tab"))
    assert [(i.kind, i.action_taken) for i in issues] == [
        (IssueKind.EMPTY_TOKEN, IssueAction.SKIPPED),
        (IssueKind.EMPTY_TAG, IssueAction.SKIPPED),
        (IssueKind.WHITESPACE_IN_TOKEN, IssueAction.COERCED)]
    assert structure(corpus) == [[("New_York", "B-LOC"), ("ok", "O")]]


def test_parse_custom_columns():
    text = "Emotet NNP B-Malware x\n"
    corpus, _ = parse_corpus(text, FormatConfig(token_column=0, tag_column=2))
    assert structure(corpus) == [[("Emotet", "B-Malware")]]


def test_parse_rejects_invalid_utf8():
    with pytest.raises(CorpusFormatError, match="line 2.*NonUtf8"):
        parse_corpus(b"ok O\nbad\xff O\n")


def test_parse_accepts_binary_stream_and_crlf():
    corpus, _ = parse_corpus(io.BytesIO(b"a O\r\nb B-X\r\n"))
    assert structure(corpus) == [[("a", "O"), ("b", "B-X")]]


def test_format_config_validation():
    with pytest.raises(ValueError):
        FormatConfig(token_column=1, tag_column=1)
    with pytest.raises(ValueError):
        FormatConfig(tag_column="first")


def test_serialize_examples():
    assert serialize_corpus(corpus_of([("Emotet", "B-Malware")])) == "Emotet B-Malware\n"
    two = corpus_of([("a", "O")], [("b", "B-X"), ("c", "I-X")])
    assert serialize_corpus(two) == "a O\n\nb B-X\nc I-X\n"
    assert serialize_corpus(two, FormatConfig(column_separator="tab")) == "a\tO\n\nb\tB-X\nc\tI-X\n"
    assert serialize_corpus(TaggedCorpus()) == ""


def test_round_trip_mini_fixture(data_dir):
    text = (data_dir / "mini.conll").read_text()
    corpus, issues = parse_corpus(text)
    assert issues == []
    assert serialize_corpus(corpus) == text
    again, _ = parse_corpus(serialize_corpus(corpus))
    assert structure(again) == structure(corpus)


def test_write_and_read_with_provenance(tmp_path):
    corpus = TaggedCorpus((Sentence((Token("a", "O"),), "A", 3),
                           Sentence((Token("b", "B-X"),), "B", 9)), TagScheme.BIO,
                          frozenset({"A", "B"}))
    path = tmp_path / "c.conll"
    side = write_corpus(path, corpus)
    assert side == provenance_path(path) and side.name == "c.conll.prov.json"
    assert json.loads(side.read_text()) == {"0": {"source": "A", "origin_line": 3},
                                            "1": {"source": "B", "origin_line": 9}}
    back, _ = read_corpus(path)
    assert back == corpus


def test_token_invariants():
    with pytest.raises(ValueError):
        Token("a b", "O")
    with pytest.raises(ValueError):
        Token("a", "")
    with pytest.raises(ValueError):
        Sentence((), "S")
    with pytest.raises(ValueError):
        TaggedCorpus((Sentence((Token("a", "O"),), "S"),), TagScheme.BIO, frozenset({"T"}))


# ---- cleaning

def test_clean_demotes_single_token_stopword():
    corpus = corpus_of([("the", "B-Tool"), ("x", "O")])
    cleaned, report = clean_corpus(corpus, {"the"})
    assert structure(cleaned) == [[("the", "O"), ("x", "O")]]
    assert report.demotions == 1
    assert report.to_json() == {"demotions": 1, "by_source": {"S": 1}, "by_tag": {"B-Tool": 1}}


def test_clean_empty_stoplist_is_identity():
    corpus = corpus_of([("the", "B-Tool")])
    cleaned, report = clean_corpus(corpus, set())
    assert cleaned == corpus and report.demotions == 0


def test_clean_leaves_multi_token_spans():
    corpus = corpus_of([("the", "B-Threat-Actor"), ("Mask", "I-Threat-Actor")])
    cleaned, report = clean_corpus(corpus, {"the"})
    assert cleaned == corpus and report.demotions == 0


def test_clean_is_case_insensitive_on_surface_and_bioes_aware():
    corpus = corpus_of([("The", "S-Tool"), ("it", "B-X"), ("it", "E-X")], scheme=TagScheme.BIOES)
    cleaned, report = clean_corpus(corpus, {"the", "it"})
    assert structure(cleaned) == [[("The", "O"), ("it", "B-X"), ("it", "E-X")]]
    assert report.demotions == 1


def test_load_stoplist():
    assert load_stoplist("# c\nThe\n\n a \n") == frozenset({"the", "a"})


# ---- properties

surfaces = st.text(st.characters(blacklist_categories=("Cs", "Zs", "Zl", "Zp", "Cc")),
                   min_size=1, max_size=8).filter(
    lambda s: not any(c.isspace() for c in s) and s != "-DOCSTART-" and "﻿" not in s)
tags = st.sampled_from(["O", "B-X", "I-X", "B-Threat-Actor", "S-Y"])
sentences_st = st.lists(st.lists(st.tuples(surfaces, tags), min_size=1, max_size=6),
                        max_size=6)


@given(sentences_st, st.sampled_from(["any", "tab", "space"]))
def test_round_trip_property(sentences, sep):
    corpus = corpus_of(*sentences)
    cfg = FormatConfig(column_separator=sep)
    text = serialize_corpus(corpus, cfg)
    assert sum(1 for line in text.split("\n") if line) == corpus.num_tokens
    back, issues = parse_corpus(text, cfg, "S")
    assert issues == []
    assert structure(back) == structure(corpus)


noisy_lines = st.lists(st.one_of(
    st.just(""), st.just("   "), st.just("-DOCSTART- O"), st.just("lonely"),
    st.just("a O"), st.just("b B-X extra I-X"), st.just("c\tO")), max_size=30)


@given(noisy_lines)
def test_line_accounting_property(lines):
    reader = CorpusReader(FormatConfig(), "S")
    corpus, issues = reader.read("\n".join(lines) + ("\n" if lines else ""))
    c = reader.counts
    assert c.tokens + c.skipped + c.blank + c.docstart == c.total == len(lines)
    assert c.tokens == corpus.num_tokens
    assert all(len(s) > 0 for s in corpus.sentences)


@given(sentences_st, st.sets(st.sampled_from(["a", "the", "x"])))
def test_clean_idempotent(sentences, stop):
    valid = [[(w, t if t != "S-Y" else "B-Y") for w, t in s] for s in sentences]
    fixed = []
    for s in valid:
        out, prev = [], None
        for w, t in s:
            if t == "I-X" and prev not in ("B-X", "I-X"):
                t = "B-X"
            out.append((w, t))
            prev = t
        fixed.append(out)
    corpus = corpus_of(*fixed)
    once, rep = clean_corpus(corpus, stop)
    twice, rep2 = clean_corpus(once, stop)
    assert twice == once and rep2.demotions == 0
    assert once.num_tokens == corpus.num_tokens
