"""Reading, writing and cleaning CoNLL-like token/tag files.

One token per line, annotation columns separated by whitespace, a blank line
between sentences.  Only two columns matter here: the surface form (first
column by default) and the tag (last column by default).
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from .tagscheme import OUTSIDE_TAG, SchemeViolation, TagScheme, to_spans, validate_sequence

log = logging.getLogger(__name__)

_WHITESPACE = re.compile(r"\s")

PROVENANCE_SUFFIX = ".prov.json"


class CorpusFormatError(ValueError):
    """Malformed or undecodable corpus input."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Token:
    surface: str
    tag: str

    def __post_init__(self):
        if not self.surface or _WHITESPACE.search(self.surface):
            raise ValueError(f"invalid token surface {self.surface!r}")
        if not self.tag:
            raise ValueError(f"empty tag for token {self.surface!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[Token, ...]
    source: str
    origin_line: int = 1

    def __post_init__(self):
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def tags(self) -> List[str]:
        return [t.tag for t in self.tokens]

    @property
    def surfaces(self) -> List[str]:
        return [t.surface for t in self.tokens]

    def with_tags(self, tags: Sequence[str]) -> "Sentence":
        if len(tags) != len(self.tokens):
            raise ValueError("tag count does not match token count")
        tokens = tuple(tok if tok.tag == tag else Token(tok.surface, tag)
                       for tok, tag in zip(self.tokens, tags))
        return Sentence(tokens, self.source, self.origin_line)


@dataclass(frozen=True)
class TaggedCorpus:
    sentences: Tuple[Sentence, ...] = ()
    scheme: TagScheme = TagScheme.BIO
    sources: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if not isinstance(self.sentences, tuple):
            object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "sources", frozenset(self.sources))
        for sent in self.sentences:
            if sent.source not in self.sources:
                raise ValueError(f"sentence source {sent.source!r} is not registered")

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence],
                       scheme: TagScheme = TagScheme.BIO) -> "TaggedCorpus":
        sentences = tuple(sentences)
        return cls(sentences, scheme, frozenset(s.source for s in sentences))

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def num_tokens(self) -> int:
        return sum(len(s.tokens) for s in self.sentences)

    def source_order(self) -> List[str]:
        """Sources in order of first appearance, then any sentence-less ones sorted."""
        seen: Dict[str, None] = {}
        for sent in self.sentences:
            seen.setdefault(sent.source)
        for src in sorted(self.sources - seen.keys()):
            seen.setdefault(src)
        return list(seen)

    def violations(self) -> List[Tuple[int, SchemeViolation]]:
        out = []
        for i, sent in enumerate(self.sentences):
            out.extend((i, v) for v in validate_sequence(sent.tags, self.scheme))
        return out

    def replace(self, sentences: Iterable[Sentence],
                scheme: Optional[TagScheme] = None) -> "TaggedCorpus":
        return TaggedCorpus(tuple(sentences), scheme or self.scheme, self.sources)


class IssueKind(str, Enum):
    WRONG_COLUMN_COUNT = "WrongColumnCount"
    EMPTY_TOKEN = "EmptyToken"
    EMPTY_TAG = "EmptyTag"
    NON_UTF8 = "NonUtf8"
    ORPHAN_BLANK = "OrphanBlank"
    WHITESPACE_IN_TOKEN = "WhitespaceInToken"


class IssueAction(str, Enum):
    SKIPPED = "Skipped"
    COERCED = "Coerced"
    KEPT = "Kept"


@dataclass(frozen=True)
class ParseIssue:
    line: int
    kind: IssueKind
    action_taken: IssueAction
    detail: str = ""

    def to_json(self) -> dict:
        return {"line": self.line, "kind": self.kind.value,
                "action_taken": self.action_taken.value, "detail": self.detail}


class Separator(str, Enum):
    ANY_WHITESPACE = "any"
    TAB = "tab"
    SPACE = "space"


class OnMalformed(str, Enum):
    ERROR = "error"
    SKIP = "skip"


@dataclass(frozen=True)
class FormatConfig:
    token_column: int = 0
    tag_column: Union[int, str] = "last"
    column_separator: Separator = Separator.ANY_WHITESPACE
    docstart_marker: Optional[str] = "-DOCSTART-"
    on_malformed: OnMalformed = OnMalformed.SKIP

    def __post_init__(self):
        object.__setattr__(self, "column_separator", Separator(self.column_separator))
        object.__setattr__(self, "on_malformed", OnMalformed(self.on_malformed))
        if self.token_column < 0:
            raise ValueError("token_column must be non-negative")
        if self.tag_column != "last":
            if not isinstance(self.tag_column, int) or self.tag_column < 0:
                raise ValueError(f"tag_column must be a non-negative index or 'last', "
                                 f"got {self.tag_column!r}")
            if self.tag_column == self.token_column:
                raise ValueError("token_column and tag_column must differ")

    @classmethod
    def from_dict(cls, data: dict) -> "FormatConfig":
        known = {"token_column", "tag_column", "column_separator",
                 "docstart_marker", "on_malformed"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown format options: {sorted(unknown)}")
        return cls(**data)

    @property
    def output_separator(self) -> str:
        return "\t" if self.column_separator is Separator.TAB else " "


@dataclass
class LineCounts:
    """Per-file line accounting; ``tokens + skipped + blank + docstart == total``."""

    total: int = 0
    tokens: int = 0
    skipped: int = 0
    blank: int = 0
    docstart: int = 0

    def to_json(self) -> dict:
        return {"total_lines": self.total, "tokens_parsed": self.tokens,
                "lines_skipped": self.skipped, "blank_lines": self.blank,
                "docstart_lines": self.docstart}


TextInput = Union[str, bytes, Iterable[str], Iterable[bytes]]


def _iter_lines(data: TextInput):
    """Yield ``(lineno, text)`` with line terminators stripped; bytes are decoded strictly."""
    if isinstance(data, bytes):
        data = data.split(b"\n")
        if data and data[-1] == b"":
            data.pop()
    elif isinstance(data, str):
        data = data.split("\n")
        if data and data[-1] == "":
            data.pop()
    for lineno, raw in enumerate(data, 1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusFormatError(f"{IssueKind.NON_UTF8.value}: {exc.reason} "
                                        f"at byte {exc.start}", lineno) from None
        if lineno == 1 and raw.startswith("\ufeff"):
            raw = raw[1:]
        yield lineno, raw.rstrip("\r\n")


class CorpusReader:
    """Stateful parser for one input file.

    After :meth:`read`, :attr:`counts` holds the line accounting for the run.
    """

    def __init__(self, config: FormatConfig = FormatConfig(), source_id: str = "corpus",
                 scheme: TagScheme = TagScheme.BIO):
        if not source_id:
            raise ValueError("source_id must be non-empty")
        self.config = config
        self.source_id = source_id
        self.scheme = scheme
        self.counts = LineCounts()
        self.issues: List[ParseIssue] = []

    def _issue(self, lineno: int, kind: IssueKind, action: IssueAction, detail: str,
               malformed: bool = True) -> None:
        if malformed and self.config.on_malformed is OnMalformed.ERROR:
            raise CorpusFormatError(f"{kind.value}: {detail}", lineno)
        self.issues.append(ParseIssue(lineno, kind, action, detail))

    def _split(self, line: str) -> List[str]:
        sep = self.config.column_separator
        if sep is Separator.ANY_WHITESPACE:
            return line.split()
        fields = line.split("\t" if sep is Separator.TAB else " ")
        return [f.strip() for f in fields]

    def read(self, data: TextInput) -> Tuple[TaggedCorpus, List[ParseIssue]]:
        cfg = self.config
        self.counts = counts = LineCounts()
        self.issues = []
        sentences: List[Sentence] = []
        current: List[Token] = []
        start_line = 0
        after_docstart = False

        def flush():
            nonlocal current
            if current:
                sentences.append(Sentence(tuple(current), self.source_id, start_line))
                current = []

        for lineno, line in _iter_lines(data):
            counts.total += 1
            if not line.strip():
                counts.blank += 1
                if current:
                    flush()
                elif not after_docstart:
                    self._issue(lineno, IssueKind.ORPHAN_BLANK, IssueAction.SKIPPED,
                                "blank line outside a sentence", malformed=False)
                after_docstart = False
                continue

            fields = self._split(line)
            if (cfg.docstart_marker is not None and cfg.token_column < len(fields)
                    and fields[cfg.token_column] == cfg.docstart_marker):
                counts.docstart += 1
                flush()
                after_docstart = True
                continue
            after_docstart = False

            tag_col = len(fields) - 1 if cfg.tag_column == "last" else cfg.tag_column
            if cfg.token_column >= len(fields) or tag_col >= len(fields) \
                    or tag_col == cfg.token_column:
                self._issue(lineno, IssueKind.WRONG_COLUMN_COUNT, IssueAction.SKIPPED,
                            f"{len(fields)} column(s) in {line!r}")
                counts.skipped += 1
                continue
            surface, tag = fields[cfg.token_column], fields[tag_col]
            if not surface:
                self._issue(lineno, IssueKind.EMPTY_TOKEN, IssueAction.SKIPPED,
                            f"empty surface in {line!r}")
                counts.skipped += 1
                continue
            if not tag:
                self._issue(lineno, IssueKind.EMPTY_TAG, IssueAction.SKIPPED,
                            f"empty tag in {line!r}")
                counts.skipped += 1
                continue
            if _WHITESPACE.search(tag):
                self._issue(lineno, IssueKind.WRONG_COLUMN_COUNT, IssueAction.SKIPPED,
                            f"tag {tag!r} contains whitespace")
                counts.skipped += 1
                continue
            if _WHITESPACE.search(surface):
                coerced = "_".join(surface.split())
                self._issue(lineno, IssueKind.WHITESPACE_IN_TOKEN, IssueAction.COERCED,
                            f"{surface!r} -> {coerced!r}")
                surface = coerced

            if not current:
                start_line = lineno
            current.append(Token(surface, tag))
            counts.tokens += 1

        flush()
        corpus = TaggedCorpus(tuple(sentences), self.scheme, frozenset([self.source_id]))
        if self.issues:
            log.info("%s: %d parse issue(s)", self.source_id, len(self.issues))
        return corpus, list(self.issues)


def parse_corpus(data: TextInput, config: FormatConfig = FormatConfig(),
                 source_id: str = "corpus",
                 scheme_hint: TagScheme = TagScheme.BIO) -> Tuple[TaggedCorpus, List[ParseIssue]]:
    """Parse CoNLL-like text into a corpus plus the list of issues met on the way.

    Scheme validity is not checked here; see :mod:`nerh.tagscheme`.
    """
    return CorpusReader(config, source_id, scheme_hint).read(data)


def serialize_corpus(corpus: TaggedCorpus, config: FormatConfig = FormatConfig()) -> str:
    sep = config.output_separator
    blocks = ["".join(f"{tok.surface}{sep}{tok.tag}\n" for tok in sent.tokens)
              for sent in corpus.sentences]
    return "\n".join(blocks)


def provenance_json(corpus: TaggedCorpus) -> Dict[str, dict]:
    return {str(i): {"source": s.source, "origin_line": s.origin_line}
            for i, s in enumerate(corpus.sentences)}


def attach_provenance(corpus: TaggedCorpus, provenance: Dict[str, dict]) -> TaggedCorpus:
    """Restore per-sentence source and origin line from a sidecar mapping."""
    if len(provenance) != len(corpus.sentences):
        raise CorpusFormatError(
            f"provenance covers {len(provenance)} sentences, corpus has {len(corpus.sentences)}")
    sentences = []
    for i, sent in enumerate(corpus.sentences):
        try:
            entry = provenance[str(i)]
        except KeyError:
            raise CorpusFormatError(f"provenance has no entry for sentence {i}") from None
        sentences.append(Sentence(sent.tokens, entry["source"], int(entry["origin_line"])))
    return TaggedCorpus.from_sentences(sentences, corpus.scheme)


def provenance_path(corpus_path: Union[str, Path]) -> Path:
    corpus_path = Path(corpus_path)
    return corpus_path.with_name(corpus_path.name + PROVENANCE_SUFFIX)


def write_corpus(path: Union[str, Path], corpus: TaggedCorpus,
                 config: FormatConfig = FormatConfig()) -> Path:
    """Write the corpus and its provenance sidecar; returns the sidecar path."""
    path = Path(path)
    path.write_text(serialize_corpus(corpus, config), encoding="utf-8")
    side = provenance_path(path)
    write_json(side, provenance_json(corpus))
    return side


def read_corpus(path: Union[str, Path], config: FormatConfig = FormatConfig(),
                source_id: Optional[str] = None, scheme: TagScheme = TagScheme.BIO,
                use_provenance: bool = True) -> Tuple[TaggedCorpus, List[ParseIssue]]:
    """Read a corpus file, restoring provenance from its sidecar when present."""
    path = Path(path)
    corpus, issues = parse_corpus(path.read_bytes(), config, source_id or path.stem, scheme)
    side = provenance_path(path)
    if use_provenance and source_id is None and side.exists():
        corpus = attach_provenance(corpus, json.loads(side.read_text(encoding="utf-8")))
    return corpus, issues


def write_json(path: Union[str, Path], payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


@dataclass
class CleaningReport:
    demotions: int = 0
    by_source: Counter = field(default_factory=Counter)
    by_tag: Counter = field(default_factory=Counter)

    def update(self, other: "CleaningReport") -> None:
        self.demotions += other.demotions
        self.by_source.update(other.by_source)
        self.by_tag.update(other.by_tag)

    def to_json(self) -> dict:
        return {"demotions": self.demotions,
                "by_source": dict(sorted(self.by_source.items())),
                "by_tag": dict(sorted(self.by_tag.items()))}


def load_stoplist(text: str) -> FrozenSet[str]:
    return frozenset(line.strip().lower() for line in text.splitlines()
                     if line.strip() and not line.lstrip().startswith("#"))


def clean_corpus(corpus: TaggedCorpus,
                 stoplist: Iterable[str] = ()) -> Tuple[TaggedCorpus, CleaningReport]:
    """Demote single-token entities whose lowercased surface is in *stoplist*.

    Multi-token spans are never touched.
    """
    stop = frozenset(stoplist)
    report = CleaningReport()
    if not stop:
        return corpus, report
    sentences = []
    for sent in corpus.sentences:
        tags = None
        for span in to_spans(sent.tags, corpus.scheme):
            if len(span) == 1 and sent.tokens[span.start].surface.lower() in stop:
                if tags is None:
                    tags = sent.tags
                report.demotions += 1
                report.by_source[sent.source] += 1
                report.by_tag[tags[span.start]] += 1
                tags[span.start] = OUTSIDE_TAG
        sentences.append(sent if tags is None else sent.with_tags(tags))
    return corpus.replace(sentences), report
