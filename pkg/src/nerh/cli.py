"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .conll_io import (FormatConfig, OnMalformed, TaggedCorpus, parse_corpus, read_corpus,
                       write_corpus, write_json)
from .corpus import compute_stats, format_stats, split
from .evaluate import EvalReport, compare_reports, format_report, load_eval_pair, score
from .mapping import (UnmappedPolicy, apply_ruleset, default_ruleset, identity_ruleset,
                      parse_ruleset)
from .pipeline import (ConfigError, PipelineConfig, SourceEntry, StageError, convert_corpus,
                       harmonize, load_taxonomy_arg, repair_corpus)
from .tagscheme import RepairPolicy, TagScheme, detect_scheme, split_tag, to_spans

log = logging.getLogger("nerh")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _use_color(stream) -> bool:
    return "NERH_NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def _emit_text(text: str, stream=None) -> None:
    stream = stream or sys.stdout
    if _use_color(stream):
        lines = text.split("\n")
        for i in range(len(lines) - 1):
            if lines[i] and set(lines[i + 1]) == {"-"}:
                lines[i] = f"\033[1m{lines[i]}\033[0m"
        text = "\n".join(lines)
    stream.write(text)


def _emit(payload, text: str, fmt: str) -> None:
    if fmt == "json":
        sys.stdout.write(json.dumps(payload, indent=2, ensure_ascii=False) + "\n")
    else:
        _emit_text(text)


def _format_config(args) -> FormatConfig:
    return FormatConfig(on_malformed=OnMalformed(args.on_malformed))


def _parse_ratios(text: str):
    try:
        ratios = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--ratios expects three comma-separated numbers, got {text!r}")
    if len(ratios) != 3:
        raise UsageError(f"--ratios expects three values, got {len(ratios)}")
    return ratios


def _input_spec(spec: str):
    """``PATH`` or ``PATH:SOURCE_ID``."""
    path, sep, source = spec.rpartition(":")
    if sep and path and not Path(spec).exists():
        return Path(path), source
    return Path(spec), None


# ---------------------------------------------------------------- analyze

def analyze_corpus(corpus: TaggedCorpus, issues) -> dict:
    tag_freq: Counter = Counter()
    for sent in corpus.sentences:
        for tag in sent.tags:
            prefix, etype = split_tag(tag)
            if etype:
                tag_freq[etype] += 1
    scheme = detect_scheme(t for s in corpus.sentences for t in s.tags)
    checked = TaggedCorpus(corpus.sentences, scheme, corpus.sources)
    repaired, audit = repair_corpus(checked)
    span_freq: Counter = Counter()
    for sent in repaired.sentences:
        span_freq.update(s.entity_type for s in to_spans(sent.tags, scheme))
    return {
        "tokens": corpus.num_tokens,
        "sentences": len(corpus.sentences),
        "detected_scheme": scheme.value,
        "unique_types": len(tag_freq),
        "type_token_frequency": dict(sorted(tag_freq.items())),
        "type_span_frequency": dict(sorted(span_freq.items())),
        "entity_spans": sum(span_freq.values()),
        "violations": audit["violations_by_kind"],
        "parse_issues": len(issues),
    }


def _analysis_text(report: dict) -> str:
    lines = ["Source analysis", "-" * 66,
             f"{'Source':<14}{'Tokens':>10}{'Sentences':>11}{'Spans':>9}{'Types':>7}"
             f"{'Format':>8}{'Violations':>11}"]
    for name, r in report.items():
        lines.append(f"{name:<14}{r['tokens']:>10,}{r['sentences']:>11,}{r['entity_spans']:>9,}"
                     f"{r['unique_types']:>7}{r['detected_scheme']:>8}"
                     f"{sum(r['violations'].values()):>11}")
    for name, r in report.items():
        lines += ["", f"{name}: type inventory", "-" * 40]
        for t, n in sorted(r["type_span_frequency"].items(), key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"{t:<28}{n:>10,}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    entries = []
    if args.config:
        cfg = PipelineConfig.load(args.config)
        entries = [(e.path, e.source_id, e.format_config(args.on_malformed or cfg.on_malformed))
                   for e in cfg.sources]
    for spec in args.inputs:
        path, source = _input_spec(spec)
        entries.append((path, source or path.stem,
                        FormatConfig(on_malformed=args.on_malformed or "skip")))
    if not entries:
        raise UsageError("analyze needs input files or --config")
    report = {}
    for path, source, fmt in entries:
        corpus, issues = parse_corpus(path.read_bytes(), fmt, source)
        report[source] = analyze_corpus(corpus, issues)
    _emit(report, _analysis_text(report), args.format)
    return EXIT_OK


# ---------------------------------------------------------------- harmonize

def cmd_harmonize(args) -> int:
    if not args.config:
        raise UsageError("harmonize needs --config")
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    base = Path(args.config).parent
    cwd = Path.cwd()
    # flags override config fields; flag paths are relative to the working directory
    if args.ruleset:
        data["ruleset"] = args.ruleset if args.ruleset in ("identity", "default") \
            else str(cwd / args.ruleset)
    if args.taxonomy:
        data["taxonomy"] = args.taxonomy if args.taxonomy == "builtin" \
            else str(cwd / args.taxonomy)
    if args.stoplist:
        data["stoplist"] = str(cwd / args.stoplist)
    if args.on_malformed:
        data["on_malformed"] = args.on_malformed
    if args.on_unmapped:
        data["on_unmapped"] = args.on_unmapped
    if args.ratios or args.seed is not None:
        split_cfg = dict(data.get("split") or {})
        if args.ratios:
            split_cfg["ratios"] = list(_parse_ratios(args.ratios))
        if args.seed is not None:
            split_cfg["seed"] = args.seed
        data["split"] = split_cfg
    cfg = PipelineConfig.from_dict(data, base)
    out = Path(args.out) if args.out else cfg.out
    if out is None:
        raise UsageError("no output directory: pass --out or set 'out' in the config")
    result = harmonize(cfg, out)
    summary = {"out": str(result.out), "files": result.files,
               "sentences": result.stats["total_sentences"],
               "tokens": result.stats["total_tokens"],
               "entity_tokens": result.stats["entity_tokens"],
               "annotation_density_pct": result.stats["annotation_density_pct"]}
    text = (f"wrote {len(result.files)} files to {result.out}\n"
            f"{summary['sentences']:,} sentences, {summary['tokens']:,} tokens, "
            f"{summary['entity_tokens']:,} entity tokens "
            f"({summary['annotation_density_pct']:.2f}%)\n")
    _emit(summary, text, args.format)
    return EXIT_OK


# ---------------------------------------------------------------- convert / validate

def cmd_convert(args) -> int:
    src, dst = TagScheme.parse(args.from_scheme), TagScheme.parse(args.to_scheme)
    corpus, _ = read_corpus(args.input, _format_config(args), scheme=src)
    if args.repair:
        corpus, _ = repair_corpus(corpus)
    out = convert_corpus(corpus, dst)
    write_corpus(args.output, out)
    return EXIT_OK


def cmd_validate(args) -> int:
    scheme = TagScheme.parse(args.scheme)
    corpus, issues = read_corpus(args.input, _format_config(args), scheme=scheme)
    violations = [{"sentence": i, "sentence_origin_line": corpus.sentences[i].origin_line,
                   **v.to_json()} for i, v in corpus.violations()]
    payload = {"scheme": scheme.value, "sentences": len(corpus),
               "violations": violations, "parse_issues": [i.to_json() for i in issues]}
    if args.repair:
        if not args.output:
            raise UsageError("--repair needs --output")
        repaired, audit = repair_corpus(corpus, RepairPolicy.parse(args.policy))
        write_corpus(args.output, repaired)
        payload["repair"] = {k: v for k, v in audit.items() if k != "violations"}
    lines = [f"{len(violations)} violation(s) in {len(corpus)} sentence(s) under {scheme.value}"]
    for v in violations[:50]:
        lines.append(f"  sentence {v['sentence']} (line {v['sentence_origin_line']}) "
                     f"pos {v['position']}: {v['kind']}: {v['detail']}")
    if len(violations) > 50:
        lines.append(f"  ... {len(violations) - 50} more")
    _emit(payload, "\n".join(lines) + "\n", args.format)
    return EXIT_OK if not violations or args.repair else EXIT_DATA


# ---------------------------------------------------------------- map

def cmd_map(args) -> int:
    corpus, _ = read_corpus(args.input, _format_config(args), source_id=args.source_id)
    taxonomy = load_taxonomy_arg(args.taxonomy or "builtin")
    policy = UnmappedPolicy.parse(args.on_unmapped or "error")
    ruleset_arg = args.ruleset or "default"
    if ruleset_arg == "identity":
        ruleset = identity_ruleset(corpus)
        taxonomy = ruleset.target_taxonomy()
    elif ruleset_arg == "default":
        ruleset = default_ruleset(taxonomy, policy)
    else:
        ruleset = parse_ruleset(Path(ruleset_arg).read_text(encoding="utf-8"), taxonomy, policy)
    mapped, report = apply_ruleset(corpus, ruleset, taxonomy)
    write_corpus(args.output, mapped)
    if args.report:
        write_json(args.report, report.to_json())
    _emit(report.to_json(),
          f"spans: {report.spans_before} before, {report.spans_after} after, "
          f"{report.spans_removed} removed ({report.excluded_tokens} tokens)\n", args.format)
    return EXIT_OK


# ---------------------------------------------------------------- stats / split

def cmd_stats(args) -> int:
    corpus, _ = read_corpus(args.input, _format_config(args))
    stats = compute_stats(corpus)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "stats.json", stats.to_json())
        (out / "stats.txt").write_text(format_stats(stats), encoding="utf-8")
    _emit(stats.to_json(), format_stats(stats), args.format)
    return EXIT_OK


def cmd_split(args) -> int:
    if args.seed is None:
        raise UsageError("split needs an explicit --seed")
    ratios = _parse_ratios(args.ratios or "0.8,0.1,0.1")
    corpus, _ = read_corpus(args.input, _format_config(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    parts = split(corpus, ratios, args.seed)
    summary = {}
    for name, part in zip(("train", "dev", "test"), parts):
        write_corpus(out / f"{name}.conll", part)
        summary[name] = {"sentences": len(part), "tokens": part.num_tokens}
    text = "".join(f"{k}: {v['sentences']} sentences, {v['tokens']} tokens\n"
                   for k, v in summary.items())
    _emit(summary, text, args.format)
    return EXIT_OK


# ---------------------------------------------------------------- evaluate / compare

def cmd_evaluate(args) -> int:
    gold, pred = load_eval_pair(args.gold, args.pred, _format_config(args),
                                per_source=args.per_source)
    if args.repair_pred:
        pred, _ = repair_corpus(pred)
    report = score(gold, pred)
    payload = report.to_json()
    text = format_report(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "eval.json", payload)
        (out / "eval.txt").write_text(text, encoding="utf-8")
    _emit(payload, text, args.format)
    return EXIT_OK


def cmd_compare(args) -> int:
    a = EvalReport.from_json(json.loads(Path(args.baseline).read_text(encoding="utf-8")))
    b = EvalReport.from_json(json.loads(Path(args.candidate).read_text(encoding="utf-8")))
    text = compare_reports(a, b, (args.baseline_name, args.candidate_name))
    _emit({"baseline_f1": a.f1, "candidate_f1": b.f1,
           "relative_f1_change": None if a.f1 == 0 else (b.f1 - a.f1) / a.f1}, text, args.format)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nerh", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, malformed_default="skip"):
        p.add_argument("--format", choices=("json", "text"), default="text")
        p.add_argument("--on-malformed", choices=("error", "skip"), default=malformed_default)

    p = sub.add_parser("analyze", help="per-source schema report")
    p.add_argument("inputs", nargs="*", help="PATH or PATH:SOURCE_ID")
    p.add_argument("--config")
    common(p, None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("harmonize", help="run the full pipeline from a JSON config")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--ruleset", help="PATH, 'identity' or 'default'")
    p.add_argument("--taxonomy", help="PATH or 'builtin'")
    p.add_argument("--stoplist")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios")
    p.add_argument("--on-unmapped", choices=("error", "outside"))
    common(p, None)
    p.set_defaults(func=cmd_harmonize)

    p = sub.add_parser("convert", help="convert between BIO and BIOES")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--from", dest="from_scheme", required=True)
    p.add_argument("--to", dest="to_scheme", required=True)
    p.add_argument("--repair", action="store_true", help="repair invalid sequences first")
    common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("map", help="apply a mapping ruleset to a BIO corpus")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--source-id", help="source of every sentence (default: sidecar or file stem)")
    p.add_argument("--ruleset", help="PATH, 'identity' or 'default'")
    p.add_argument("--taxonomy", help="PATH or 'builtin'")
    p.add_argument("--on-unmapped", choices=("error", "outside"))
    p.add_argument("--report", help="write the mapping report JSON here")
    common(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("input")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="seeded stratified train/dev/test split")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--ratios")
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", help="entity-level scoring of predictions")
    p.add_argument("gold")
    p.add_argument("pred", nargs="?", help="omit when GOLD has 'surface gold pred' columns")
    p.add_argument("--per-source", action="store_true")
    p.add_argument("--repair-pred", action="store_true")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("validate", help="check (and optionally repair) tag sequences")
    p.add_argument("input")
    p.add_argument("--scheme", default="BIO")
    p.add_argument("--repair", action="store_true")
    p.add_argument("--policy", default="conservative")
    p.add_argument("-o", "--output")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="compare two evaluation reports")
    p.add_argument("baseline")
    p.add_argument("candidate")
    p.add_argument("--baseline-name", default="baseline")
    p.add_argument("--candidate-name", default="candidate")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version, or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"nerh {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"nerh {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"nerh {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
