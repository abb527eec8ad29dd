"""Ranking, average precision and per-event MAP."""
from __future__ import annotations

import json
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus
from .errors import CoverageError, ParseError, ValidationError


@dataclass(frozen=True)
class Prediction:
    event_id: str
    line_no: int
    score: float

    @property
    def key(self):
        return (self.event_id, self.line_no)


@dataclass
class EvalReport:
    map: float
    per_event: dict[str, float]
    excluded_events: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = {
            "map": self.map,
            "per_event": dict(sorted(self.per_event.items())),
            "excluded_events": sorted(self.excluded_events),
            "metadata": self.metadata,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(float(d["map"]), {k: float(v) for k, v in d["per_event"].items()},
                   list(d.get("excluded_events", [])), dict(d.get("metadata", {})))


def rank_event(predictions: Sequence[Prediction]) -> list[int]:
    """Line numbers by descending score; ties go to the earlier line."""
    lines = [p.line_no for p in predictions]
    if len(set(lines)) != len(lines):
        raise ValidationError("duplicate line_no in event predictions")
    if not all(np.isfinite(p.score) for p in predictions):
        raise ValidationError("non-finite score in predictions")
    return [p.line_no for p in sorted(predictions, key=lambda p: (-p.score, p.line_no))]


def average_precision(ranked_labels: Sequence[int]) -> float:
    """Mean of precision@k over the ranks k that hold a positive."""
    r = np.asarray(ranked_labels) != 0
    if not r.any():
        raise ValidationError("average precision is undefined without positives")
    ranks = np.flatnonzero(r) + 1
    # Exact rational sum so that simple cases like 5/6 come out correctly rounded.
    total = sum(Fraction(i + 1, int(k)) for i, k in enumerate(ranks))
    return float(total / len(ranks))


def ranked_ap(scores, labels, lines) -> float:
    """AP of one event given parallel arrays (ties broken by ascending line)."""
    order = np.lexsort((np.asarray(lines), -np.asarray(scores, dtype=float)))
    return average_precision(np.asarray(labels)[order])


def map_from_arrays(scores, labels, events, lines) -> tuple[float, dict[str, float], list[str]]:
    scores, labels = np.asarray(scores, float), np.asarray(labels)
    events, lines = np.asarray(events), np.asarray(lines)
    per_event, excluded = {}, []
    for ev in sorted(set(events.tolist())):
        m = events == ev
        if labels[m].any():
            per_event[ev] = ranked_ap(scores[m], labels[m], lines[m])
        else:
            excluded.append(ev)
    value = float(np.mean(list(per_event.values()))) if per_event else 0.0
    return value, per_event, excluded


def map_over_events(predictions: Iterable[Prediction], corpus: Corpus, split: str | None = None,
                    metadata: dict | None = None) -> EvalReport:
    """Per-event AP and their mean. Zero-positive events are excluded and listed."""
    preds = list(predictions)
    gold = {u.key: u.label for u in corpus.utterances(split)}
    got = {}
    dup = []
    for p in preds:
        if p.key in got:
            dup.append(p.key)
        got[p.key] = p.score
    missing = sorted(set(gold) - set(got))
    extra = sorted(set(got) - set(gold))
    if missing or extra or dup:
        parts = []
        if missing:
            parts.append(f"missing predictions for {missing[:10]}")
        if extra:
            parts.append(f"unexpected predictions for {extra[:10]}")
        if dup:
            parts.append(f"duplicate predictions for {dup[:10]}")
        raise CoverageError("; ".join(parts), missing, extra)
    keys = sorted(gold)
    value, per_event, excluded = map_from_arrays(
        [got[k] for k in keys], [gold[k] for k in keys], [k[0] for k in keys], [k[1] for k in keys])
    meta = {"split": split or "all"}
    meta.update(metadata or {})
    return EvalReport(value, per_event, excluded, meta)


# ---------------------------------------------------------------------------
# files


def write_predictions(predictions: Iterable[Prediction], path) -> None:
    rows = sorted(predictions, key=lambda p: p.key)
    Path(path).write_text("".join(f"{p.event_id}\t{p.line_no}\t{p.score:.6f}\n" for p in rows),
                          encoding="utf-8")


def read_predictions(path) -> list[Prediction]:
    path = Path(path)
    out = []
    for i, raw in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not raw.strip():
            continue
        cols = [c.strip() for c in raw.split("\t")]
        if len(cols) != 3:
            raise ParseError(f"expected 3 columns, got {len(cols)}", path, i)
        try:
            out.append(Prediction(cols[0], int(cols[1]), float(cols[2])))
        except ValueError as exc:
            raise ParseError(str(exc), path, i) from None
    return out


def write_report(report: EvalReport, path) -> None:
    Path(path).write_text(report.to_json(), encoding="utf-8")


def read_report(path) -> EvalReport:
    return EvalReport.from_json(Path(path).read_text(encoding="utf-8"))


def compare_runs(reports: dict[str, EvalReport]) -> list[tuple[str, float]]:
    """(run id, MAP x 100) rows, best first; equal MAPs keep run-id order."""
    if not reports:
        raise ValidationError("compare_runs needs at least one report")
    rows = [(run_id, 100.0 * r.map) for run_id, r in sorted(reports.items())]
    return sorted(rows, key=lambda row: -row[1])


def format_comparison(rows: Sequence[tuple[str, float]]) -> str:
    width = max(len("run"), *(len(r) for r, _ in rows))
    lines = [f"{'rank':>4}  {'run':<{width}}  {'MAP':>6}"]
    for i, (run_id, m) in enumerate(rows, start=1):
        lines.append(f"{i:>4}  {run_id:<{width}}  {m:6.2f}")
    return "\n".join(lines) + "\n"
