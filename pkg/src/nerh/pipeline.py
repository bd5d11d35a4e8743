"""End-to-end harmonization run: parse, repair, convert, map, clean, merge, stats, split.

All outputs are staged in a scratch directory and moved into place only when
every stage succeeded, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import os
import shutil
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .conll_io import (CleaningReport, CorpusReader, FormatConfig, OnMalformed, TaggedCorpus,
                       clean_corpus, load_stoplist, write_corpus, write_json)
from .corpus import compute_stats, find_duplicate_sentences, format_stats, merge, split
from .mapping import (ADJACENCY_POLICY, MappingReport, MappingRuleSet, UnmappedPolicy,
                      apply_ruleset, default_ruleset, identity_ruleset, parse_ruleset)
from .tagscheme import RepairPolicy, TagScheme, convert_scheme, repair_sequence, validate_sequence
from .taxonomy import Taxonomy, default_taxonomy, load_taxonomy

log = logging.getLogger(__name__)

CORPUS_NAME = "corpus.conll"
TIMESTAMP_NAME = "timestamp.txt"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, where: str = ""):
        loc = f" [{where}]" if where else ""
        super().__init__(f"stage '{stage}'{loc} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class SourceEntry:
    path: Path
    source_id: str
    scheme: TagScheme = TagScheme.BIO
    format: dict = field(default_factory=dict)

    def format_config(self, on_malformed: str) -> FormatConfig:
        opts = {"on_malformed": on_malformed, **self.format}
        return FormatConfig.from_dict(opts)


@dataclass
class PipelineConfig:
    sources: List[SourceEntry]
    out: Optional[Path] = None
    taxonomy: str = "builtin"
    taxonomy_extra: List[str] = field(default_factory=list)
    ruleset: str = "default"
    on_unmapped: str = "error"
    stoplist: Optional[str] = None
    split_ratios: Optional[Tuple[float, float, float]] = None
    split_seed: Optional[int] = None
    on_malformed: str = "skip"
    repair_policy: str = "conservative"

    def __post_init__(self):
        ids = [s.source_id for s in self.sources]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ConfigError(f"duplicate source_id(s): {', '.join(dupes)}")
        if not self.sources:
            raise ConfigError("at least one source is required")
        OnMalformed(self.on_malformed)
        RepairPolicy.parse(self.repair_policy)
        UnmappedPolicy.parse(self.on_unmapped)
        if (self.split_ratios is None) != (self.split_seed is None):
            raise ConfigError("splitting needs both ratios and an explicit seed")

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "PipelineConfig":
        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        def keyword_or_path(value, keywords):
            if value is None or value in keywords:
                return value
            return str(resolve(value))

        known = {"sources", "out", "taxonomy", "taxonomy_extra", "ruleset", "on_unmapped",
                 "stoplist", "split", "on_malformed", "repair_policy"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        sources = []
        for i, entry in enumerate(data.get("sources", [])):
            try:
                sources.append(SourceEntry(resolve(entry["path"]), entry["source_id"],
                                           TagScheme.parse(entry.get("scheme", "BIO")),
                                           dict(entry.get("format", {}))))
            except KeyError as exc:
                raise ConfigError(f"sources[{i}] is missing {exc}") from None
        split_cfg = data.get("split")
        ratios = seed = None
        if split_cfg:
            ratios = tuple(split_cfg.get("ratios", (0.8, 0.1, 0.1)))
            seed = split_cfg.get("seed")
            if seed is None:
                raise ConfigError("split.seed is required")
        return cls(
            sources=sources,
            out=resolve(data["out"]) if data.get("out") else None,
            taxonomy=keyword_or_path(data.get("taxonomy", "builtin"), ("builtin",)),
            taxonomy_extra=list(data.get("taxonomy_extra", [])),
            ruleset=keyword_or_path(data.get("ruleset", "default"), ("default", "identity")),
            on_unmapped=data.get("on_unmapped", "error"),
            stoplist=keyword_or_path(data.get("stoplist"), ()),
            split_ratios=ratios,
            split_seed=seed,
            on_malformed=data.get("on_malformed", "skip"),
            repair_policy=data.get("repair_policy", "conservative"),
        )

    @classmethod
    def load(cls, path: Path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data, path.parent)

    def to_json(self) -> dict:
        """Effective configuration, minus the output directory."""
        return {
            "sources": [{"path": str(s.path), "source_id": s.source_id,
                         "scheme": s.scheme.value, "format": s.format} for s in self.sources],
            "taxonomy": self.taxonomy,
            "taxonomy_extra": self.taxonomy_extra,
            "ruleset": self.ruleset,
            "on_unmapped": self.on_unmapped,
            "stoplist": self.stoplist,
            "split": None if self.split_ratios is None else
            {"ratios": list(self.split_ratios), "seed": self.split_seed},
            "on_malformed": self.on_malformed,
            "repair_policy": self.repair_policy,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_taxonomy_arg(value: str, extra: Sequence[str] = ()) -> Taxonomy:
    if value == "builtin":
        return default_taxonomy(extra)
    tax = load_taxonomy(Path(value).read_text(encoding="utf-8"))
    return tax.extended(extra) if extra else tax


def repair_corpus(corpus: TaggedCorpus,
                  policy: RepairPolicy = RepairPolicy.CONSERVATIVE) -> Tuple[TaggedCorpus, dict]:
    """Repair every sentence; returns the corpus and an audit record."""
    kinds: Counter = Counter()
    details = []
    sentences = []
    for i, sent in enumerate(corpus.sentences):
        tags = sent.tags
        found = validate_sequence(tags, corpus.scheme)
        if not found:
            sentences.append(sent)
            continue
        for v in found:
            kinds[v.kind.value] += 1
            details.append({"sentence": i, "sentence_origin_line": sent.origin_line,
                            **v.to_json()})
        sentences.append(sent.with_tags(repair_sequence(tags, corpus.scheme, policy)))
    audit = {"policy": policy.value, "scheme": corpus.scheme.value,
             "sentences_repaired": len({d["sentence"] for d in details}),
             "violations_by_kind": dict(sorted(kinds.items())), "violations": details}
    return corpus.replace(sentences), audit


def convert_corpus(corpus: TaggedCorpus, target: TagScheme) -> TaggedCorpus:
    if corpus.scheme is target:
        return corpus
    sentences = [s.with_tags(convert_scheme(s.tags, corpus.scheme, target))
                 for s in corpus.sentences]
    return corpus.replace(sentences, target)


def _build_ruleset(cfg: PipelineConfig, corpora: Sequence[TaggedCorpus],
                   taxonomy: Taxonomy) -> Tuple[MappingRuleSet, Taxonomy]:
    policy = UnmappedPolicy.parse(cfg.on_unmapped)
    if cfg.ruleset == "identity":
        rs = identity_ruleset(merge(list(corpora)))
        return rs, rs.target_taxonomy()
    if cfg.ruleset == "default":
        return default_ruleset(taxonomy, policy), taxonomy
    text = Path(cfg.ruleset).read_text(encoding="utf-8")
    return parse_ruleset(text, taxonomy, policy), taxonomy


@dataclass
class RunResult:
    out: Path
    corpus: TaggedCorpus
    stats: dict
    manifest: dict
    files: List[str]


def _run_stages(cfg: PipelineConfig, stage_dir: Path) -> Tuple[TaggedCorpus, dict, dict]:
    policy = RepairPolicy.parse(cfg.repair_policy)

    stage = "taxonomy"
    try:
        taxonomy = load_taxonomy_arg(cfg.taxonomy, cfg.taxonomy_extra)
    except (ValueError, OSError) as exc:
        raise StageError(stage, exc) from exc

    parse_report: Dict[str, dict] = {}
    repair_report: Dict[str, dict] = {}
    inputs = []
    converted: List[TaggedCorpus] = []
    for entry in cfg.sources:
        stage = "parse"
        try:
            reader = CorpusReader(entry.format_config(cfg.on_malformed), entry.source_id,
                                  entry.scheme)
            raw, issues = reader.read(entry.path.read_bytes())
        except (ValueError, OSError) as exc:
            raise StageError(stage, exc, str(entry.path)) from exc
        parse_report[entry.source_id] = {"file": entry.path.name, **reader.counts.to_json(),
                                         "issues": [i.to_json() for i in issues]}
        inputs.append({"source_id": entry.source_id, "file": entry.path.name,
                       "scheme": entry.scheme.value, "sha256": _sha256(entry.path)})
        log.info("%s: %d sentences, %d tokens", entry.source_id, len(raw), raw.num_tokens)

        repaired, audit = repair_corpus(raw, policy)
        repair_report[entry.source_id] = audit

        stage = "convert"
        try:
            converted.append(convert_corpus(repaired, TagScheme.BIO))
        except ValueError as exc:
            raise StageError(stage, exc, entry.source_id) from exc

    stage = "map"
    try:
        ruleset, out_taxonomy = _build_ruleset(cfg, converted, taxonomy)
    except (ValueError, OSError) as exc:
        raise StageError("ruleset", exc) from exc
    mapped = []
    mapping_report: Dict[str, dict] = {}
    for entry, corpus in zip(cfg.sources, converted):
        try:
            m, rep = apply_ruleset(corpus, ruleset, out_taxonomy)
        except ValueError as exc:
            raise StageError(stage, exc, entry.source_id) from exc
        mapped.append(m)
        mapping_report[entry.source_id] = rep.to_json()

    stage = "clean"
    try:
        stop = frozenset()
        if cfg.stoplist:
            stop = load_stoplist(Path(cfg.stoplist).read_text(encoding="utf-8"))
        cleaning = CleaningReport()
        cleaned = []
        for corpus in mapped:
            c, rep = clean_corpus(corpus, stop)
            cleaned.append(c)
            cleaning.update(rep)
    except (ValueError, OSError) as exc:
        raise StageError(stage, exc) from exc

    stage = "merge"
    try:
        unified = merge(cleaned)
    except ValueError as exc:
        raise StageError(stage, exc) from exc

    stats = compute_stats(unified)
    write_corpus(stage_dir / CORPUS_NAME, unified)
    write_json(stage_dir / "parse_report.json", parse_report)
    write_json(stage_dir / "repair_report.json", repair_report)
    write_json(stage_dir / "mapping_report.json", mapping_report)
    write_json(stage_dir / "cleaning_report.json", cleaning.to_json())
    write_json(stage_dir / "stats.json", stats.to_json())
    (stage_dir / "stats.txt").write_text(format_stats(stats), encoding="utf-8")
    write_json(stage_dir / "duplicates.json", find_duplicate_sentences(unified))

    split_info = None
    if cfg.split_ratios is not None:
        stage = "split"
        try:
            parts = split(unified, cfg.split_ratios, cfg.split_seed)
        except ValueError as exc:
            raise StageError(stage, exc) from exc
        split_dir = stage_dir / "split"
        split_dir.mkdir()
        split_info = {"ratios": list(cfg.split_ratios), "seed": cfg.split_seed,
                      "stratified_by": "source", "rounding": "largest-remainder"}
        for name, part in zip(("train", "dev", "test"), parts):
            write_corpus(split_dir / f"{name}.conll", part)
            split_info[name] = {"sentences": len(part), "tokens": part.num_tokens}

    manifest = {
        "tool": "nerh",
        "version": __version__,
        "config_sha256": cfg.digest(),
        "config": cfg.to_json(),
        "inputs": inputs,
        "line_accounting": {k: {f: v[f] for f in ("total_lines", "tokens_parsed",
                                                    "lines_skipped", "blank_lines",
                                                    "docstart_lines")}
                            for k, v in parse_report.items()},
        "output_tokens": unified.num_tokens,
        "taxonomy": list(out_taxonomy.types),
        "decisions": {
            "stage_order": ["parse", "repair", "convert", "map", "clean", "merge", "stats"]
            + (["split"] if split_info else []),
            "target_scheme": "BIO",
            "repair_policy": policy.value,
            "repair_policy_origin": "implementer choice; source repair rules are unpublished",
            "ruleset": cfg.ruleset if cfg.ruleset in ("default", "identity") else "file",
            "ruleset_rules": len(ruleset.rules),
            "ruleset_partial": cfg.ruleset == "default",
            "on_unmapped": UnmappedPolicy.parse(cfg.on_unmapped).value,
            "adjacency_policy": ADJACENCY_POLICY,
            "deduplication": "none (duplicates reported in duplicates.json)",
            "stoplist_entries": len(stop),
            "cleaning_scope": "single-token spans only",
            "split": split_info,
        },
    }
    write_json(stage_dir / "manifest.json", manifest)
    return unified, stats.to_json(), manifest


def harmonize(cfg: PipelineConfig, out: Optional[Path] = None) -> RunResult:
    """Run the full pipeline and write its outputs into *out*.

    The timestamp lives in its own file so the rest of the tree is
    byte-identical across repeated runs of the same configuration.
    """
    out = Path(out or cfg.out or "harmonized")
    out.parent.mkdir(parents=True, exist_ok=True)
    stage_dir = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        unified, stats, manifest = _run_stages(cfg, stage_dir)
        (stage_dir / TIMESTAMP_NAME).write_text(
            _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds") + "\n",
            encoding="utf-8")
        out.mkdir(exist_ok=True)
        files = []
        for path in sorted(stage_dir.rglob("*")):
            if path.is_dir():
                continue
            rel = path.relative_to(stage_dir)
            dest = out / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(path, dest)
            files.append(str(rel))
    finally:
        shutil.rmtree(stage_dir, ignore_errors=True)
    return RunResult(out, unified, stats, manifest, files)
