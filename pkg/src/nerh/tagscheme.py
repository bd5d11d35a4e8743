"""Tagging schemes (BIO, BIOES): validation, repair, and span-based conversion.

Tags are plain strings.  ``"O"`` marks a token outside any entity; every
other tag is ``PREFIX-TYPE`` where the prefix and type are separated by the
*first* hyphen, so ``"B-Threat-Actor"`` has type ``"Threat-Actor"``.

Conversion between schemes always goes through :class:`EntitySpan` lists,
never through string rewriting, so the span set is preserved by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

OUTSIDE_TAG = "O"


class TagScheme(str, Enum):
    BIO = "BIO"
    BIOES = "BIOES"

    @property
    def prefixes(self) -> frozenset:
        if self is TagScheme.BIO:
            return frozenset("BIO")
        return frozenset("BIOES")

    @classmethod
    def parse(cls, name: str) -> "TagScheme":
        try:
            return cls(name.upper())
        except ValueError:
            raise ValueError(f"unknown tag scheme {name!r} (expected BIO or BIOES)") from None


class ViolationKind(str, Enum):
    ORPHAN_INSIDE = "OrphanInside"
    ORPHAN_END = "OrphanEnd"
    TYPE_MISMATCH = "TypeMismatch"
    UNKNOWN_PREFIX = "UnknownPrefix"
    DANGLING_BEGIN = "DanglingBegin"


class RepairPolicy(str, Enum):
    CONSERVATIVE = "conservative"

    @classmethod
    def parse(cls, name: str) -> "RepairPolicy":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown repair policy {name!r}") from None


@dataclass(frozen=True, order=True)
class EntitySpan:
    """A typed token range ``[start, end)`` inside one sentence."""

    start: int
    end: int
    entity_type: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span bounds [{self.start}, {self.end})")
        if not self.entity_type:
            raise ValueError("span type must be non-empty")

    def __len__(self) -> int:
        return self.end - self.start

    def as_tuple(self) -> Tuple[str, int, int]:
        return (self.entity_type, self.start, self.end)


@dataclass(frozen=True)
class SchemeViolation:
    position: int
    kind: ViolationKind
    detail: str

    def to_json(self) -> dict:
        return {"position": self.position, "kind": self.kind.value, "detail": self.detail}


class SchemeError(ValueError):
    """Raised when a tag sequence is not well-formed for the requested operation."""


@lru_cache(maxsize=4096)
def split_tag(tag: str) -> Tuple[str, str]:
    """Split a tag into ``(prefix, type)``.

    ``"O"`` gives ``("O", "")``; a tag without a hyphen gives ``(tag, "")``.
    """
    if tag == OUTSIDE_TAG:
        return OUTSIDE_TAG, ""
    prefix, sep, etype = tag.partition("-")
    if not sep:
        return tag, ""
    return prefix, etype


def tag_type(tag: str) -> str:
    return split_tag(tag)[1]


def _scan(tags: Sequence[str], scheme: TagScheme) -> Tuple[List[SchemeViolation], List[str]]:
    """Walk a tag sequence once, reporting violations and building the repaired copy.

    Validation and repair share this state machine so that a sequence is
    reported clean exactly when repair leaves it unchanged.
    """
    bioes = scheme is TagScheme.BIOES
    violations: List[SchemeViolation] = []
    out = list(tags)
    # type and start of the currently open span (BIOES: not yet closed by E-)
    open_type: Optional[str] = None
    open_start = -1

    def close_dangling(at: int) -> None:
        # BIOES only: the open span never got its E-; rewrite its last tag.
        last = at - 1
        violations.append(SchemeViolation(
            open_start, ViolationKind.DANGLING_BEGIN,
            f"span {open_type!r} opened at {open_start} is not closed"))
        if last == open_start:
            out[last] = "S-" + open_type
        else:
            out[last] = "E-" + open_type

    for i, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if prefix == OUTSIDE_TAG and not etype:
            if bioes and open_type is not None:
                close_dangling(i)
            open_type = None
            continue

        valid_prefixes = ("B", "I", "E", "S") if bioes else ("B", "I")
        if not etype or prefix not in valid_prefixes:
            if etype and not bioes and prefix in ("E", "S"):
                # BIOES tag inside a BIO sequence: keep the type.
                if prefix == "E" and open_type != etype:
                    violations.append(SchemeViolation(
                        i, ViolationKind.ORPHAN_END, f"{tag!r} does not close an open span"))
                    out[i] = "B-" + etype
                    open_type = etype
                    continue
                violations.append(SchemeViolation(
                    i, ViolationKind.UNKNOWN_PREFIX, f"prefix {prefix!r} is not valid in BIO"))
                if prefix == "E":
                    out[i] = "I-" + etype
                else:
                    out[i] = "B-" + etype
                    open_type = etype
                continue
            violations.append(SchemeViolation(
                i, ViolationKind.UNKNOWN_PREFIX, f"unrecognized tag {tag!r}"))
            if bioes and open_type is not None:
                close_dangling(i)
            out[i] = OUTSIDE_TAG
            open_type = None
            continue

        if prefix == "B" or prefix == "S":
            if bioes and open_type is not None:
                close_dangling(i)
            open_type = etype if prefix == "B" else None
            if prefix == "B":
                open_start = i
        elif prefix == "I":
            if open_type == etype:
                continue
            if open_type is None:
                violations.append(SchemeViolation(
                    i, ViolationKind.ORPHAN_INSIDE, f"{tag!r} has no preceding span start"))
            else:
                violations.append(SchemeViolation(
                    i, ViolationKind.TYPE_MISMATCH,
                    f"{tag!r} continues a span of type {open_type!r}"))
                if bioes:
                    close_dangling(i)
            out[i] = "B-" + etype
            open_type = etype
            open_start = i
        else:  # E, BIOES only
            if open_type == etype:
                open_type = None
                continue
            if open_type is None:
                violations.append(SchemeViolation(
                    i, ViolationKind.ORPHAN_END, f"{tag!r} does not close an open span"))
            else:
                violations.append(SchemeViolation(
                    i, ViolationKind.TYPE_MISMATCH,
                    f"{tag!r} closes a span of type {open_type!r}"))
                close_dangling(i)
            out[i] = "S-" + etype
            open_type = None

    if bioes and open_type is not None:
        close_dangling(len(tags))

    violations.sort(key=lambda v: v.position)
    return violations, out


def validate_sequence(tags: Sequence[str], scheme: TagScheme) -> List[SchemeViolation]:
    """Return every violation of *scheme* in *tags*, in positional order.

    An empty list means the sequence is well-formed.
    """
    return _scan(tags, scheme)[0]


def repair_sequence(tags: Sequence[str], scheme: TagScheme,
                    policy: RepairPolicy = RepairPolicy.CONSERVATIVE) -> List[str]:
    """Rewrite *tags* into a well-formed sequence without dropping annotations.

    Orphaned or mistyped inside tags start a new span, orphaned end tags
    become singletons (``S-`` in BIOES, ``B-`` in BIO), unclosed BIOES spans
    get their last tag rewritten to close them.  ``O`` positions and entity
    types are left alone; tags with no recoverable type become ``O``.
    """
    if policy is not RepairPolicy.CONSERVATIVE:
        raise ValueError(f"unsupported repair policy {policy!r}")
    return _scan(tags, scheme)[1]


def to_spans(tags: Sequence[str], scheme: TagScheme) -> List[EntitySpan]:
    """Extract entity spans from a well-formed tag sequence.

    Raises :class:`SchemeError` naming the first violation otherwise.
    """
    if scheme is TagScheme.BIO:
        spans = _bio_spans(tags)
        if spans is not None:
            return spans
    else:
        spans = _bioes_spans(tags)
        if spans is not None:
            return spans
    first = validate_sequence(tags, scheme)[0]
    raise SchemeError(
        f"invalid {scheme.value} sequence at position {first.position}: "
        f"{first.kind.value} ({first.detail})")


def _bio_spans(tags: Sequence[str]) -> Optional[List[EntitySpan]]:
    # Fast path; returns None on any irregularity so the caller can report it.
    spans = []
    start = -1
    cur = None
    for i, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if prefix == "I" and etype and etype == cur:
            continue
        if cur is not None:
            spans.append(EntitySpan(start, i, cur))
            cur = None
        if prefix == "B" and etype:
            cur, start = etype, i
        elif tag != OUTSIDE_TAG:
            return None
    if cur is not None:
        spans.append(EntitySpan(start, len(tags), cur))
    return spans


def _bioes_spans(tags: Sequence[str]) -> Optional[List[EntitySpan]]:
    spans = []
    start = -1
    cur = None
    for i, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if cur is not None:
            if etype != cur or prefix not in ("I", "E"):
                return None
            if prefix == "E":
                spans.append(EntitySpan(start, i + 1, cur))
                cur = None
            continue
        if tag == OUTSIDE_TAG:
            continue
        if not etype:
            return None
        if prefix == "S":
            spans.append(EntitySpan(i, i + 1, etype))
        elif prefix == "B":
            cur, start = etype, i
        else:
            return None
    if cur is not None:
        return None
    return spans


def from_spans(spans: Iterable[EntitySpan], length: int, scheme: TagScheme) -> List[str]:
    """Render spans as tags; the inverse of :func:`to_spans`."""
    tags = [OUTSIDE_TAG] * length
    prev_end = 0
    for span in sorted(spans):
        if span.end > length:
            raise SchemeError(f"span {span.as_tuple()} exceeds sentence length {length}")
        if span.start < prev_end:
            raise SchemeError(f"span {span.as_tuple()} overlaps a preceding span")
        prev_end = span.end
        t = span.entity_type
        if scheme is TagScheme.BIOES:
            if len(span) == 1:
                tags[span.start] = "S-" + t
                continue
            tags[span.start] = "B-" + t
            for j in range(span.start + 1, span.end - 1):
                tags[j] = "I-" + t
            tags[span.end - 1] = "E-" + t
        else:
            tags[span.start] = "B-" + t
            for j in range(span.start + 1, span.end):
                tags[j] = "I-" + t
    return tags


def convert_scheme(tags: Sequence[str], source: TagScheme, target: TagScheme) -> List[str]:
    return from_spans(to_spans(tags, source), len(tags), target)


def detect_scheme(tags: Iterable[str]) -> TagScheme:
    """BIOES if any ``E-``/``S-`` prefix occurs, else BIO."""
    for tag in tags:
        prefix, etype = split_tag(tag)
        if etype and prefix in ("E", "S"):
            return TagScheme.BIOES
    return TagScheme.BIO
