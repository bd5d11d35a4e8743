"""Registry of permitted target entity types.

The built-in registry is derived from STIX 2.1 object names.  Custom
registries are loaded from plain text files: one type name per line,
``#`` starting a comment line, blank lines ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

from .tagscheme import OUTSIDE_TAG


class TaxonomyError(ValueError):
    pass


# The harmonized corpus uses 21 types; only these 17 are known by name.  The
# other four go through ``default_taxonomy(extra=...)`` or a taxonomy file.
STIX_TYPES: Tuple[Tuple[str, str], ...] = (
    ("Threat-Actor", "Individuals, groups, or organizations acting with malicious intent (SDO)."),
    ("Malware", "Code inserted into a system to compromise it (SDO)."),
    ("Tool", "Legitimate software that can be used by threat actors (SDO)."),
    ("Software", "Non-malicious software products such as operating systems (SCO)."),
    ("File", "File objects and file hashes (SCO)."),
    ("Vulnerability", "A flaw in software exploitable by an attacker (SDO)."),
    ("IPv4-Addr", "IPv4 addresses (SCO)."),
    ("Domain-Name", "Network domain names (SCO)."),
    ("Identity", "Individuals, organizations, or groups (SDO)."),
    ("Attack-Pattern", "Tactics, techniques, and procedures (SDO)."),
    ("Campaign", "A grouping of adversarial behaviors over time (SDO)."),
    ("Course-of-Action", "An action taken to prevent or respond to an attack (SDO)."),
    ("Intrusion-Set", "A grouped set of adversarial behaviors and resources (SDO)."),
    ("Malware-Analysis", "Results of analyzing a malware instance (SDO)."),
    ("Indicator", "A pattern used to detect suspicious activity (SDO)."),
    ("Infrastructure", "Systems or services used for attacks or defense (SDO)."),
    ("Location", "A geographic location (SDO)."),
)

# Number of types in the released corpus; the built-in registry falls short by
# EXTENSION_SLOTS until the caller supplies the rest.
CORPUS_TYPE_COUNT = 21
EXTENSION_SLOTS = CORPUS_TYPE_COUNT - len(STIX_TYPES)


@dataclass(frozen=True)
class Taxonomy:
    types: Tuple[str, ...] = ()
    descriptions: Mapping[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        seen = set()
        for name in self.types:
            _check_name(name)
            if name in seen:
                raise TaxonomyError(f"duplicate type name {name!r}")
            seen.add(name)
        object.__setattr__(self, "_members", frozenset(self.types))

    def __contains__(self, name: object) -> bool:
        return name in self._members

    def __len__(self) -> int:
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def extended(self, names: Iterable[str]) -> "Taxonomy":
        """Return a copy with *names* appended (names already present are skipped)."""
        new = list(self.types)
        for name in names:
            if name not in self._members and name not in new:
                new.append(name)
        return Taxonomy(tuple(new), dict(self.descriptions))

    def serialize(self) -> str:
        return "".join(name + "\n" for name in self.types)


def _check_name(name: str) -> None:
    if not name:
        raise TaxonomyError("type names must be non-empty")
    if any(ch.isspace() for ch in name):
        raise TaxonomyError(f"type name {name!r} contains whitespace")
    if name == OUTSIDE_TAG:
        raise TaxonomyError("'O' is reserved and cannot be a taxonomy type")


def default_taxonomy(extra: Iterable[str] = ()) -> Taxonomy:
    """The built-in STIX 2.1-derived registry, optionally extended by *extra*."""
    base = Taxonomy(tuple(name for name, _ in STIX_TYPES), dict(STIX_TYPES))
    return base.extended(extra) if extra else base


def load_taxonomy(text: str) -> Taxonomy:
    names = []
    seen: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            _check_name(line)
        except TaxonomyError as exc:
            raise TaxonomyError(f"line {lineno}: {exc}") from None
        if line in seen:
            raise TaxonomyError(
                f"line {lineno}: duplicate type name {line!r} (first on line {seen[line]})")
        seen[line] = lineno
        names.append(line)
    builtin = dict(STIX_TYPES)
    return Taxonomy(tuple(names), {n: builtin[n] for n in names if n in builtin})


def is_valid_type(taxonomy: Taxonomy, name: str) -> bool:
    return bool(name) and name in taxonomy
