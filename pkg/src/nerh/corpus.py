"""Merging per-source corpora, corpus statistics, and seeded stratified splits."""

from __future__ import annotations

import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

from .conll_io import Sentence, TaggedCorpus
from .tagscheme import OUTSIDE_TAG, tag_type, to_spans


class CorpusError(ValueError):
    pass


def percent(part: int, whole: int) -> float:
    """``part / whole`` as a percentage rounded half-up to two decimals."""
    if whole == 0:
        return 0.0
    value = (Decimal(part) * 100 / Decimal(whole)).quantize(Decimal("0.01"), ROUND_HALF_UP)
    return float(value)


def merge(corpora: Sequence[TaggedCorpus]) -> TaggedCorpus:
    """Concatenate corpora in order, keeping sentence provenance.

    Nothing is deduplicated; see :func:`find_duplicate_sentences`.
    """
    if not corpora:
        return TaggedCorpus()
    scheme = corpora[0].scheme
    owner: Dict[str, int] = {}
    sentences: List[Sentence] = []
    for i, corpus in enumerate(corpora):
        if corpus.scheme is not scheme:
            raise CorpusError(f"input {i} uses {corpus.scheme.value}, expected {scheme.value}")
        for src in corpus.sources:
            if src in owner:
                raise CorpusError(f"source {src!r} appears in inputs {owner[src]} and {i}")
            owner[src] = i
        sentences.extend(corpus.sentences)
    return TaggedCorpus(tuple(sentences), scheme, frozenset(owner))


@dataclass
class SourceStats:
    tokens: int = 0
    sentences: int = 0
    entity_tokens: int = 0
    entity_spans: int = 0
    token_pct: float = 0.0
    entity_pct: float = 0.0

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "token_pct": self.token_pct,
                "entity_tokens": self.entity_tokens, "entity_pct": self.entity_pct,
                "sentences": self.sentences, "entity_spans": self.entity_spans}


@dataclass
class CorpusStats:
    total_tokens: int = 0
    total_sentences: int = 0
    entity_tokens: int = 0
    entity_spans: int = 0
    vocabulary_size: int = 0
    per_type_spans: Dict[str, int] = field(default_factory=dict)
    per_type_tokens: Dict[str, int] = field(default_factory=dict)
    per_source: Dict[str, SourceStats] = field(default_factory=dict)

    @property
    def annotation_density(self) -> float:
        return self.entity_tokens / self.total_tokens if self.total_tokens else 0.0

    @property
    def annotation_density_pct(self) -> float:
        return percent(self.entity_tokens, self.total_tokens)

    def to_json(self) -> dict:
        return {
            "total_tokens": self.total_tokens,
            "total_sentences": self.total_sentences,
            "entity_tokens": self.entity_tokens,
            "entity_spans": self.entity_spans,
            "annotation_density": self.annotation_density,
            "annotation_density_pct": self.annotation_density_pct,
            "vocabulary_size": self.vocabulary_size,
            "per_type_spans": dict(sorted(self.per_type_spans.items())),
            "per_type_tokens": dict(sorted(self.per_type_tokens.items())),
            "per_source": {k: v.to_json() for k, v in self.per_source.items()},
        }


def compute_stats(corpus: TaggedCorpus) -> CorpusStats:
    """Table-style statistics for a valid corpus.

    Entities are counted both as spans and as non-O tokens.
    """
    stats = CorpusStats()
    vocab = set()
    type_spans: Counter = Counter()
    type_tokens: Counter = Counter()
    per_source: Dict[str, SourceStats] = {src: SourceStats() for src in corpus.source_order()}

    for sent in corpus.sentences:
        tags = sent.tags
        src = per_source[sent.source]
        src.sentences += 1
        src.tokens += len(tags)
        for tok in sent.tokens:
            vocab.add(tok.surface)
        ent_tokens = 0
        for tag in tags:
            if tag != OUTSIDE_TAG:
                ent_tokens += 1
                type_tokens[tag_type(tag)] += 1
        src.entity_tokens += ent_tokens
        if ent_tokens:
            spans = to_spans(tags, corpus.scheme)
            src.entity_spans += len(spans)
            type_spans.update(s.entity_type for s in spans)

    stats.total_sentences = len(corpus.sentences)
    stats.total_tokens = sum(s.tokens for s in per_source.values())
    stats.entity_tokens = sum(s.entity_tokens for s in per_source.values())
    stats.entity_spans = sum(s.entity_spans for s in per_source.values())
    stats.vocabulary_size = len(vocab)
    stats.per_type_spans = dict(type_spans)
    stats.per_type_tokens = dict(type_tokens)
    for s in per_source.values():
        s.token_pct = percent(s.tokens, stats.total_tokens)
        s.entity_pct = percent(s.entity_tokens, stats.entity_tokens)
    stats.per_source = per_source
    return stats


def format_stats(stats: CorpusStats) -> str:
    """Plain-text rendering: overall table, per-source contribution, type distribution."""
    lines = ["Overall statistics", "-" * 48]
    rows = [
        ("Total Tokens", f"{stats.total_tokens:,}"),
        ("Total Sentences", f"{stats.total_sentences:,}"),
        ("Total Annotated Entity Tokens", f"{stats.entity_tokens:,}"),
        ("Total Entity Spans", f"{stats.entity_spans:,}"),
        ("Annotation Density (%)", f"{stats.annotation_density_pct:.2f}%"),
        ("Vocabulary Size (Unique Tokens)", f"{stats.vocabulary_size:,}"),
    ]
    lines += [f"{k:<34}{v:>14}" for k, v in rows]

    lines += ["", "Source contribution", "-" * 72,
              f"{'Source':<14}{'Token Count':>13}{'Token (%)':>11}"
              f"{'Entity Tokens':>15}{'Entity (%)':>11}{'Spans':>8}"]
    for name, s in stats.per_source.items():
        lines.append(f"{name:<14}{s.tokens:>13,}{s.token_pct:>10.2f}%"
                     f"{s.entity_tokens:>15,}{s.entity_pct:>10.2f}%{s.entity_spans:>8,}")
    if stats.per_source:
        tok_pct = sum(s.token_pct for s in stats.per_source.values())
        ent_pct = sum(s.entity_pct for s in stats.per_source.values())
        lines.append(f"{'Total':<14}{stats.total_tokens:>13,}{tok_pct:>10.2f}%"
                     f"{stats.entity_tokens:>15,}{ent_pct:>10.2f}%{stats.entity_spans:>8,}")

    lines += ["", "Entity type distribution", "-" * 52,
              f"{'Type':<24}{'Spans':>9}{'Span (%)':>10}{'Tokens':>9}"]
    ordered = sorted(stats.per_type_spans.items(), key=lambda kv: (-kv[1], kv[0]))
    for name, n in ordered:
        lines.append(f"{name:<24}{n:>9,}{percent(n, stats.entity_spans):>9.2f}%"
                     f"{stats.per_type_tokens.get(name, 0):>9,}")
    return "\n".join(lines) + "\n"


def find_duplicate_sentences(corpus: TaggedCorpus) -> List[dict]:
    """Groups of sentences with identical surface sequences (reported, never removed)."""
    groups: Dict[Tuple[str, ...], List[int]] = defaultdict(list)
    for i, sent in enumerate(corpus.sentences):
        groups[tuple(sent.surfaces)].append(i)
    out = []
    for idx in groups.values():
        if len(idx) < 2:
            continue
        tagsets = {tuple(corpus.sentences[i].tags) for i in idx}
        out.append({"sentences": idx,
                    "sources": sorted({corpus.sentences[i].source for i in idx}),
                    "tags_agree": len(tagsets) == 1})
    return out


def apportion(n: int, ratios: Sequence[Fraction]) -> List[int]:
    """Largest-remainder apportionment of *n* items; ties go to the earlier part."""
    quotas = [n * r for r in ratios]
    counts = [int(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _exact_ratios(ratios: Sequence[float]) -> List[Fraction]:
    if len(ratios) != 3:
        raise CorpusError("split needs exactly three ratios (train, dev, test)")
    if any(r <= 0 for r in ratios):
        raise CorpusError(f"split ratios must be positive, got {list(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {sum(ratios)!r}")
    # decimal reading of each float so 0.1 means 1/10, not its binary neighbour
    exact = [Fraction(repr(float(r))) for r in ratios]
    total = sum(exact)
    return [r / total for r in exact]


def split(corpus: TaggedCorpus, ratios: Sequence[float],
          seed: int) -> Tuple[TaggedCorpus, TaggedCorpus, TaggedCorpus]:
    """Sentence-level train/dev/test split, stratified by source.

    Each source's sentences are shuffled with a generator seeded from
    ``(seed, source)`` and cut by largest-remainder apportionment.  Inside
    each part sentences keep their original corpus order.
    """
    fractions = _exact_ratios(ratios)
    by_source: Dict[str, List[int]] = defaultdict(list)
    for i, sent in enumerate(corpus.sentences):
        by_source[sent.source].append(i)

    small = sorted(src for src, idx in by_source.items() if len(idx) < len(fractions))
    if small:
        raise CorpusError(f"too few sentences to split source(s): {', '.join(small)}")

    parts: List[List[int]] = [[], [], []]
    for src in sorted(by_source):
        idx = list(by_source[src])
        random.Random(f"{seed}:{src}").shuffle(idx)
        counts = apportion(len(idx), fractions)
        pos = 0
        for p, k in enumerate(counts):
            parts[p].extend(idx[pos:pos + k])
            pos += k

    out = []
    for p in parts:
        out.append(TaggedCorpus(tuple(corpus.sentences[i] for i in sorted(p)),
                                corpus.scheme, corpus.sources))
    return out[0], out[1], out[2]
