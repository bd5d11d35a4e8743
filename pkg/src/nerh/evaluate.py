"""Entity-level scoring of predictions against gold corpora.

Spans match only when type, start and end all agree.  Besides micro
P/R/F1 (overall, per type, per source) the report carries sentence-level
coverage figures: average predicted entities per sentence and sentence
entity recall in micro and macro form.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .conll_io import (CorpusFormatError, FormatConfig, TaggedCorpus, attach_provenance,
                       parse_corpus, provenance_path)
from .tagscheme import TagScheme, to_spans

MATCH_CRITERION = "exact (type, start, end)"
SENT_RECALL_MICRO_DEF = "sum of matched spans / sum of gold spans over sentences"
SENT_RECALL_MACRO_DEF = "mean of per-sentence matched/gold over sentences with gold spans"


class AlignmentError(ValueError):
    pass


@dataclass
class PRF:
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    support: int = 0
    predicted: int = 0
    matched: int = 0

    @classmethod
    def from_counts(cls, matched: int, gold: int, pred: int,
                    zero_div: Optional[Counter] = None) -> "PRF":
        if pred:
            p = matched / pred
        else:
            p = 0.0
            if zero_div is not None:
                zero_div["precision"] += 1
        if gold:
            r = matched / gold
        else:
            r = 0.0
            if zero_div is not None:
                zero_div["recall"] += 1
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1, gold, pred, matched)

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "support": self.support, "predicted": self.predicted, "matched": self.matched}


@dataclass
class EvalReport:
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    per_type: Dict[str, PRF] = field(default_factory=dict)
    per_source: Dict[str, PRF] = field(default_factory=dict)
    avg_entities_per_sentence: float = 0.0
    sent_recall_micro: float = 0.0
    sent_recall_macro: float = 0.0
    gold_spans: int = 0
    pred_spans: int = 0
    matched_spans: int = 0
    sentences: int = 0
    zero_division: Dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_type": {k: v.to_json() for k, v in sorted(self.per_type.items())},
            "per_source": {k: v.to_json() for k, v in sorted(self.per_source.items())},
            "avg_entities_per_sentence": self.avg_entities_per_sentence,
            "sent_recall_micro": self.sent_recall_micro,
            "sent_recall_macro": self.sent_recall_macro,
            "counts": {"gold_spans": self.gold_spans, "pred_spans": self.pred_spans,
                       "matched_spans": self.matched_spans, "sentences": self.sentences},
            "zero_division": dict(sorted(self.zero_division.items())),
            "metadata": {
                "match": MATCH_CRITERION,
                "sent_recall_micro": SENT_RECALL_MICRO_DEF,
                "sent_recall_macro": SENT_RECALL_MACRO_DEF,
                "avg_entities_per_sentence": "predicted spans / all sentences",
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "EvalReport":
        def prf(d):
            return PRF(d["precision"], d["recall"], d["f1"], d.get("support", 0),
                       d.get("predicted", 0), d.get("matched", 0))
        counts = data.get("counts", {})
        return cls(
            precision=data["precision"], recall=data["recall"], f1=data["f1"],
            per_type={k: prf(v) for k, v in data.get("per_type", {}).items()},
            per_source={k: prf(v) for k, v in data.get("per_source", {}).items()},
            avg_entities_per_sentence=data.get("avg_entities_per_sentence", 0.0),
            sent_recall_micro=data.get("sent_recall_micro", 0.0),
            sent_recall_macro=data.get("sent_recall_macro", 0.0),
            gold_spans=counts.get("gold_spans", 0), pred_spans=counts.get("pred_spans", 0),
            matched_spans=counts.get("matched_spans", 0),
            sentences=counts.get("sentences", 0),
            zero_division=dict(data.get("zero_division", {})),
        )


def check_alignment(gold: TaggedCorpus, pred: TaggedCorpus) -> None:
    if len(gold.sentences) != len(pred.sentences):
        raise AlignmentError(f"gold has {len(gold.sentences)} sentences, "
                             f"prediction has {len(pred.sentences)}")
    for i, (g, p) in enumerate(zip(gold.sentences, pred.sentences)):
        if len(g.tokens) != len(p.tokens):
            raise AlignmentError(
                f"sentence {i} (gold line {g.origin_line}): gold has {len(g.tokens)} tokens, "
                f"prediction has {len(p.tokens)}")
        for j, (gt, pt) in enumerate(zip(g.tokens, p.tokens)):
            if gt.surface != pt.surface:
                raise AlignmentError(
                    f"sentence {i} token {j} (gold line {g.origin_line + j}): "
                    f"{gt.surface!r} != {pt.surface!r}")


def score(gold: TaggedCorpus, pred: TaggedCorpus) -> EvalReport:
    check_alignment(gold, pred)
    zero_div: Counter = Counter()
    type_gold: Counter = Counter()
    type_pred: Counter = Counter()
    type_match: Counter = Counter()
    src_counts: Dict[str, List[int]] = defaultdict(lambda: [0, 0, 0])  # matched, gold, pred
    macro_sum = 0.0
    macro_n = 0
    n_gold = n_pred = n_match = 0

    for g, p in zip(gold.sentences, pred.sentences):
        gs = {s.as_tuple() for s in to_spans(g.tags, gold.scheme)}
        ps = {s.as_tuple() for s in to_spans(p.tags, pred.scheme)}
        hit = gs & ps
        n_gold += len(gs)
        n_pred += len(ps)
        n_match += len(hit)
        type_gold.update(t for t, _, _ in gs)
        type_pred.update(t for t, _, _ in ps)
        type_match.update(t for t, _, _ in hit)
        c = src_counts[g.source]
        c[0] += len(hit)
        c[1] += len(gs)
        c[2] += len(ps)
        if gs:
            macro_sum += len(hit) / len(gs)
            macro_n += 1

    overall = PRF.from_counts(n_match, n_gold, n_pred, zero_div)
    report = EvalReport(precision=overall.precision, recall=overall.recall, f1=overall.f1)
    report.gold_spans, report.pred_spans, report.matched_spans = n_gold, n_pred, n_match
    report.sentences = len(gold.sentences)
    for t in sorted(set(type_gold) | set(type_pred)):
        report.per_type[t] = PRF.from_counts(type_match[t], type_gold[t], type_pred[t], zero_div)
    for src in sorted(gold.sources):
        m, gcount, pcount = src_counts.get(src, (0, 0, 0))
        report.per_source[src] = PRF.from_counts(m, gcount, pcount, zero_div)
    report.avg_entities_per_sentence = n_pred / report.sentences if report.sentences else 0.0
    # with exact matching the pooled sentence recall coincides with micro recall
    report.sent_recall_micro = n_match / n_gold if n_gold else 0.0
    report.sent_recall_macro = macro_sum / macro_n if macro_n else 0.0
    report.zero_division = dict(zero_div)
    return report


def relative_change(before: float, after: float) -> Optional[float]:
    """``(after - before) / before``, or None when *before* is zero."""
    if before == 0:
        return None
    return (after - before) / before


def _pct(x: Optional[float]) -> str:
    return "undefined" if x is None else f"{x * 100:+.2f}%"


def compare_reports(a: EvalReport, b: EvalReport, names: Tuple[str, str] = ("A", "B")) -> str:
    """Side-by-side table of two reports with absolute and relative deltas."""
    rows = [
        ("Precision", a.precision, b.precision),
        ("Recall", a.recall, b.recall),
        ("F1", a.f1, b.f1),
        ("Avg Ent/Sent", a.avg_entities_per_sentence, b.avg_entities_per_sentence),
        ("Sent Recall (Micro)", a.sent_recall_micro, b.sent_recall_micro),
        ("Sent Recall (Macro)", a.sent_recall_macro, b.sent_recall_macro),
    ]
    head = f"{'Metric':<22}{names[0]:>10}{names[1]:>10}{'Delta':>10}{'Relative':>12}"
    lines = [head, "-" * len(head)]
    for label, x, y in rows:
        lines.append(f"{label:<22}{x:>10.4f}{y:>10.4f}{y - x:>+10.4f}"
                     f"{_pct(relative_change(x, y)):>12}")
    lines.append("")
    lines.append(f"Relative F1 change: {_pct(relative_change(a.f1, b.f1))}")
    return "\n".join(lines) + "\n"


def format_report(report: EvalReport) -> str:
    lines = ["Overall (entity-level, exact match)", "-" * 44,
             f"{'Precision':<22}{report.precision:>10.4f}",
             f"{'Recall':<22}{report.recall:>10.4f}",
             f"{'F1':<22}{report.f1:>10.4f}",
             "",
             "Sentence-level coverage", "-" * 44,
             f"{'Avg Ent/Sent':<22}{report.avg_entities_per_sentence:>10.2f}",
             f"{'Sent Recall (Micro %)':<22}{report.sent_recall_micro * 100:>9.1f}%",
             f"{'Sent Recall (Macro %)':<22}{report.sent_recall_macro * 100:>9.1f}%",
             ""]
    if report.per_source:
        lines += ["Per source", "-" * 44,
                  f"{'Source':<16}{'P':>8}{'R':>8}{'F1':>8}{'Gold':>8}"]
        for name, m in report.per_source.items():
            lines.append(f"{name:<16}{m.precision:>8.3f}{m.recall:>8.3f}{m.f1:>8.3f}"
                         f"{m.support:>8}")
        lines.append("")
    lines += ["Per type", "-" * 52,
              f"{'Type':<24}{'P':>7}{'R':>7}{'F1':>7}{'Support':>9}"]
    for name, m in report.per_type.items():
        lines.append(f"{name:<24}{m.precision:>7.3f}{m.recall:>7.3f}{m.f1:>7.3f}{m.support:>9}")
    lines.append("")
    lines.append(f"spans: gold={report.gold_spans} pred={report.pred_spans} "
                 f"matched={report.matched_spans}")
    return "\n".join(lines) + "\n"


def _column_count(raw: bytes, config: FormatConfig) -> int:
    for line in raw.decode("utf-8", errors="replace").split("\n"):
        fields = line.split()
        if fields and fields[0] != config.docstart_marker:
            return len(fields)
    return 0


def load_eval_pair(gold_path: Union[str, Path], pred_path: Union[str, Path, None] = None,
                   config: FormatConfig = FormatConfig(),
                   per_source: bool = False) -> Tuple[TaggedCorpus, TaggedCorpus]:
    """Read gold and prediction corpora.

    With no *pred_path*, or when the prediction file has three columns
    (``surface gold pred``), gold and prediction come from one file.
    ``per_source`` requires a provenance sidecar next to the gold file.
    """
    gold_path = Path(gold_path)
    side = provenance_path(gold_path)
    if per_source and not side.exists():
        raise CorpusFormatError(f"per-source scoring needs a provenance sidecar at {side}")

    def _load(path: Path, tag_column) -> TaggedCorpus:
        cfg = FormatConfig(config.token_column, tag_column, config.column_separator,
                           config.docstart_marker, config.on_malformed)
        corpus, _ = parse_corpus(path.read_bytes(), cfg, path.stem, TagScheme.BIO)
        return corpus

    src = Path(pred_path) if pred_path is not None else gold_path
    if _column_count(src.read_bytes(), config) == 3:
        gold = _load(src, 1)
        pred = _load(src, 2)
    elif pred_path is None:
        raise CorpusFormatError(f"{src} is not a three-column 'surface gold pred' file")
    else:
        gold = _load(gold_path, config.tag_column)
        pred = _load(src, config.tag_column)
    if per_source:
        gold = attach_provenance(gold, json.loads(side.read_text(encoding="utf-8")))
    return gold, pred
