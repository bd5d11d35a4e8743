"""Declarative source-tag to target-type mapping.

A ruleset maps ``(source_dataset, source_type)`` to a taxonomy type or to
``O`` (exclusion).  Rules act on entity *spans*: prefixes are regenerated
from the mapped spans, so an excluded ``B-`` can never leave a stray ``I-``
behind and span boundaries survive consolidation unchanged.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .conll_io import TaggedCorpus
from .tagscheme import OUTSIDE_TAG, EntitySpan, TagScheme, from_spans, to_spans
from .taxonomy import Taxonomy, default_taxonomy

OUTSIDE = OUTSIDE_TAG

ADJACENCY_POLICY = "preserve-boundaries"


class MappingError(ValueError):
    pass


class UnmappedPolicy(str, Enum):
    ERROR = "Error"
    TO_OUTSIDE = "ToOutside"

    @classmethod
    def parse(cls, name: str) -> "UnmappedPolicy":
        key = name.replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key or (key == "outside" and member is cls.TO_OUTSIDE):
                return member
        raise ValueError(f"unknown unmapped policy {name!r}")


@dataclass(frozen=True)
class MappingRule:
    source_dataset: str
    source_type: str
    target: str
    note: str = ""

    @property
    def excludes(self) -> bool:
        return self.target == OUTSIDE


@dataclass(frozen=True)
class MappingRuleSet:
    rules: Tuple[MappingRule, ...] = ()
    on_unmapped: UnmappedPolicy = UnmappedPolicy.ERROR

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        table: Dict[Tuple[str, str], MappingRule] = {}
        for rule in self.rules:
            key = (rule.source_dataset, rule.source_type)
            if key in table:
                raise MappingError(f"duplicate rule for {key[0]}/{key[1]}")
            table[key] = rule
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_sources", frozenset(k[0] for k in table))

    def lookup(self, source: str, source_type: str) -> Optional[MappingRule]:
        return self._table.get((source, source_type))

    @property
    def sources(self) -> frozenset:
        return self._sources

    def with_policy(self, on_unmapped: UnmappedPolicy) -> "MappingRuleSet":
        return MappingRuleSet(self.rules, on_unmapped)

    def target_taxonomy(self) -> Taxonomy:
        """Taxonomy of every non-O target, in first-seen order."""
        names: Dict[str, None] = {}
        for rule in self.rules:
            if not rule.excludes:
                names.setdefault(rule.target)
        return Taxonomy(tuple(names))

    def serialize(self) -> str:
        lines = []
        for r in self.rules:
            line = f"{r.source_dataset}\t{r.source_type}\t{r.target}"
            if r.note:
                line += f"\t# {r.note}"
            lines.append(line + "\n")
        return "".join(lines)


def parse_ruleset(text: str, taxonomy: Taxonomy,
                  on_unmapped: UnmappedPolicy = UnmappedPolicy.ERROR) -> MappingRuleSet:
    """Parse a tab-separated ruleset, validating every target against *taxonomy*."""
    rules: List[MappingRule] = []
    seen: Dict[Tuple[str, str], int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in line.split("\t")]
        note = ""
        if len(fields) == 4 and fields[3].startswith("#"):
            note = fields[3].lstrip("#").strip()
            fields = fields[:3]
        if len(fields) != 3 or not all(fields):
            raise MappingError(f"line {lineno}: expected 'source<TAB>type<TAB>target', "
                               f"got {line!r}")
        source, stype, target = fields
        if target != OUTSIDE and target not in taxonomy:
            raise MappingError(f"line {lineno}: unknown target type {target!r}")
        key = (source, stype)
        if key in seen:
            raise MappingError(f"line {lineno}: duplicate rule for {source}/{stype} "
                               f"(first on line {seen[key]})")
        seen[key] = lineno
        rules.append(MappingRule(source, stype, target, note))
    return MappingRuleSet(tuple(rules), on_unmapped)


def default_ruleset_text() -> str:
    return resources.files("nerh").joinpath("data/default_ruleset.tsv").read_text("utf-8")


def default_ruleset(taxonomy: Optional[Taxonomy] = None,
                    on_unmapped: UnmappedPolicy = UnmappedPolicy.ERROR) -> MappingRuleSet:
    """The shipped partial ruleset covering the well-known source tags."""
    return parse_ruleset(default_ruleset_text(), taxonomy or default_taxonomy(), on_unmapped)


@dataclass
class MappingReport:
    applied_tokens: Counter = field(default_factory=Counter)
    applied_spans: Counter = field(default_factory=Counter)
    targets: Dict[Tuple[str, str], str] = field(default_factory=dict)
    excluded_tokens: int = 0
    unmapped: Set[Tuple[str, str]] = field(default_factory=set)
    unmapped_tokens: int = 0
    spans_before: int = 0
    spans_after: int = 0
    spans_removed: int = 0
    # adjacent output spans sharing a type that were deliberately not merged
    adjacent_same_type: int = 0

    def to_json(self) -> dict:
        applied = [
            {"source_dataset": src, "source_type": stype, "target": self.targets[(src, stype)],
             "spans": self.applied_spans[(src, stype)], "tokens": self.applied_tokens[(src, stype)]}
            for src, stype in sorted(self.applied_spans)
        ]
        return {
            "applied": applied,
            "excluded_tokens": self.excluded_tokens,
            "unmapped": [list(k) for k in sorted(self.unmapped)],
            "unmapped_tokens": self.unmapped_tokens,
            "spans_before": self.spans_before,
            "spans_after": self.spans_after,
            "spans_removed": self.spans_removed,
            "adjacency_policy": ADJACENCY_POLICY,
            "adjacent_same_type_unmerged": self.adjacent_same_type,
        }


def apply_ruleset(corpus: TaggedCorpus, ruleset: MappingRuleSet,
                  taxonomy: Taxonomy) -> Tuple[TaggedCorpus, MappingReport]:
    """Retype or drop every span of a BIO corpus according to *ruleset*."""
    if corpus.scheme is not TagScheme.BIO:
        raise MappingError(f"mapping expects a BIO corpus, got {corpus.scheme.value}")
    strict = ruleset.on_unmapped is UnmappedPolicy.ERROR
    if strict:
        missing = sorted(s for s in corpus.sources if s not in ruleset.sources)
        if missing:
            raise MappingError(f"no rules for source(s): {', '.join(missing)}")

    report = MappingReport()
    sentences = []
    for sent in corpus.sentences:
        tags = sent.tags
        spans = to_spans(tags, TagScheme.BIO)
        report.spans_before += len(spans)
        if not spans:
            sentences.append(sent)
            continue
        mapped: List[EntitySpan] = []
        for span in spans:
            key = (sent.source, span.entity_type)
            rule = ruleset.lookup(*key)
            if rule is None:
                if strict:
                    raise MappingError(f"unmapped tag type {span.entity_type!r} "
                                       f"from source {sent.source!r}")
                report.unmapped.add(key)
                report.unmapped_tokens += len(span)
                report.excluded_tokens += len(span)
                report.spans_removed += 1
                continue
            report.applied_spans[key] += 1
            report.applied_tokens[key] += len(span)
            report.targets[key] = rule.target
            if rule.excludes:
                report.excluded_tokens += len(span)
                report.spans_removed += 1
                continue
            if rule.target not in taxonomy:
                raise MappingError(f"rule target {rule.target!r} for {key[0]}/{key[1]} "
                                   f"is not in the taxonomy")
            mapped.append(EntitySpan(span.start, span.end, rule.target))
        for a, b in zip(mapped, mapped[1:]):
            if a.end == b.start and a.entity_type == b.entity_type:
                report.adjacent_same_type += 1
        report.spans_after += len(mapped)
        new_tags = from_spans(mapped, len(tags), TagScheme.BIO)
        sentences.append(sent if new_tags == tags else sent.with_tags(new_tags))
    return corpus.replace(sentences), report


def identity_ruleset(corpus: TaggedCorpus) -> MappingRuleSet:
    """Rules mapping every ``(source, type)`` in *corpus* to itself.

    Applying it leaves tags unchanged; this is the naive-concatenation mode.
    Use :meth:`MappingRuleSet.target_taxonomy` for the matching taxonomy.
    """
    seen: Dict[Tuple[str, str], None] = {}
    for sent in corpus.sentences:
        for span in to_spans(sent.tags, corpus.scheme):
            seen.setdefault((sent.source, span.entity_type))
    rules = [MappingRule(src, t, t, "identity") for src, t in sorted(seen)]
    # every occurring type has a rule; ToOutside only relaxes the per-source check
    return MappingRuleSet(tuple(rules), UnmappedPolicy.TO_OUTSIDE)


def tag_inventory(corpus: TaggedCorpus) -> Counter:
    """Span counts per entity type across the corpus."""
    counts: Counter = Counter()
    for sent in corpus.sentences:
        counts.update(s.entity_type for s in to_spans(sent.tags, corpus.scheme))
    return counts
