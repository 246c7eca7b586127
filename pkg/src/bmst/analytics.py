"""Editing-test analytics: loading-metric ratios, rating deltas, and the four
correlation comparison tables."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .stats import CorrelationCell, pearson

SESSION_TIME_CAP_SECONDS = 1800.0

METRIC_NAMES = ("time", "keyboard", "mouse")
EQ_NAMES = ("EQ1", "EQ2", "EQ3")
CANDIDATE = "candidate"
REFERENCE = "reference"


class AnalyticsError(ValueError):
    pass


@dataclass(frozen=True)
class LoadingMetrics:
    editing_time_seconds: float
    key_presses: int
    mouse_clicks: int

    def __post_init__(self) -> None:
        if self.editing_time_seconds < 0 or self.key_presses < 0 or self.mouse_clicks < 0:
            raise AnalyticsError(f"loading metrics must be non-negative: {self}")
        if self.editing_time_seconds > SESSION_TIME_CAP_SECONDS:
            raise AnalyticsError(
                f"editing time {self.editing_time_seconds} exceeds the "
                f"{SESSION_TIME_CAP_SECONDS:.0f} s session cap"
            )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.editing_time_seconds, float(self.key_presses), float(self.mouse_clicks))


@dataclass(frozen=True)
class SampleRecord:
    """One editor's session on one generated sample."""

    piece_id: str
    target_style: str
    system: str  # candidate | reference
    editor_id: str
    metrics: LoadingMetrics
    eq: tuple[int, int, int]
    lq1: int | None = None

    def __post_init__(self) -> None:
        if self.system not in (CANDIDATE, REFERENCE):
            raise AnalyticsError(f"system must be candidate/reference, got {self.system!r}")
        if len(self.eq) != 3 or any(v not in (1, 2, 3, 4, 5) for v in self.eq):
            raise AnalyticsError(f"EQ answers must be three Likert values 1..5, got {self.eq}")
        if self.lq1 is not None and self.lq1 not in (1, 2, 3, 4, 5):
            raise AnalyticsError(f"LQ1 must be a Likert value 1..5, got {self.lq1}")

    @property
    def sample_key(self) -> tuple[str, str, str]:
        return (self.piece_id, self.target_style, self.system)

    @property
    def pair_key(self) -> tuple[str, str]:
        return (self.piece_id, self.target_style)


@dataclass(frozen=True)
class ListenerRating:
    piece_id: str
    style: str
    system: str
    rater_id: str
    lq1: int

    def __post_init__(self) -> None:
        if self.lq1 not in (1, 2, 3, 4, 5):
            raise AnalyticsError(f"LQ1 must be a Likert value 1..5, got {self.lq1}")


def sample_record_from_session(doc: dict) -> SampleRecord | None:
    """Convert one exported session document; expired sessions without EQ
    answers carry no rating and are skipped (None)."""
    if doc.get("eq") is None or doc.get("metrics") is None:
        return None
    metrics = doc["metrics"]
    clip = doc["clip"]
    return SampleRecord(
        piece_id=clip["piece_id"],
        target_style=clip["style"],
        system=clip["system"],
        editor_id=doc["editor_id"],
        metrics=LoadingMetrics(
            metrics["editing_time_seconds"], metrics["key_presses"], metrics["mouse_clicks"]
        ),
        eq=tuple(doc["eq"]),
    )


def load_session_documents(directory) -> list[dict]:
    """Read every exported session .json document in a directory."""
    from pathlib import Path

    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise AnalyticsError(f"no session documents found in {directory}")
    return [json.loads(p.read_text(encoding="utf-8")) for p in paths]


def read_listener_ratings(text: str) -> list[ListenerRating]:
    """CSV with header piece_id,style,system,rater_id,lq1."""
    reader = csv.DictReader(io.StringIO(text))
    required = {"piece_id", "style", "system", "rater_id", "lq1"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise AnalyticsError(f"listener table must have columns {sorted(required)}")
    return [
        ListenerRating(
            row["piece_id"], row["style"], row["system"], row["rater_id"], int(row["lq1"])
        )
        for row in reader
    ]


# --- performance ratios ------------------------------------------------------------


@dataclass(frozen=True)
class MetricRatios:
    time: float | None
    keyboard: float | None
    mouse: float | None

    def get(self, name: str) -> float | None:
        return getattr(self, name)


def performance_ratio(candidate: LoadingMetrics, reference: LoadingMetrics) -> MetricRatios:
    """candidate/reference per metric; a zero reference marks the cell undefined."""
    values = []
    for c, r in zip(candidate.as_tuple(), reference.as_tuple()):
        values.append(c / r if r > 0 else None)
    return MetricRatios(*values)


@dataclass
class RatioAggregate:
    mean: float
    std: float
    n: int
    excluded: int

    def formatted(self) -> str:
        return f"{self.mean:.2f}±{self.std:.2f}"


def pairwise_ratios(records: list[SampleRecord]) -> dict[tuple[str, str], list[MetricRatios]]:
    """All candidate x reference session ratio pairs, per (piece, style)."""
    by_sample: dict[tuple[str, str, str], list[SampleRecord]] = defaultdict(list)
    for rec in records:
        by_sample[rec.sample_key].append(rec)
    out: dict[tuple[str, str], list[MetricRatios]] = {}
    pairs = {(p, s) for p, s, _ in by_sample}
    for piece, style in sorted(pairs):
        cands = by_sample.get((piece, style, CANDIDATE), [])
        refs = by_sample.get((piece, style, REFERENCE), [])
        if not cands or not refs:
            continue
        out[(piece, style)] = [
            performance_ratio(c.metrics, r.metrics) for c in cands for r in refs
        ]
    return out


def aggregate_ratios(
    records: list[SampleRecord], style: str
) -> dict[str, RatioAggregate | None]:
    """Mean +- sample std of the pairwise ratios across all pieces of a style."""
    table: dict[str, RatioAggregate | None] = {}
    per_pair = pairwise_ratios([r for r in records if r.target_style == style])
    for metric in METRIC_NAMES:
        values = []
        excluded = 0
        for ratios in per_pair.values():
            for ratio in ratios:
                value = ratio.get(metric)
                if value is None:
                    excluded += 1
                else:
                    values.append(value)
        if not values:
            table[metric] = None
            continue
        arr = np.asarray(values)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        table[metric] = RatioAggregate(float(arr.mean()), std, arr.size, excluded)
    return table


# --- deltas --------------------------------------------------------------------------


@dataclass
class DeltaScores:
    eq: tuple[float, float, float]
    lq1: float | None


def _mean_eq(records: list[SampleRecord]) -> np.ndarray:
    return np.mean([rec.eq for rec in records], axis=0)


def delta_scores(
    records: list[SampleRecord], ratings: list[ListenerRating] | None = None
) -> tuple[dict[tuple[str, str], DeltaScores], list[tuple[str, str]]]:
    """Candidate-minus-reference mean ratings per (piece, style).

    Returns the per-piece deltas and the list of pairs skipped because one
    system's records were missing.
    """
    by_sample: dict[tuple[str, str, str], list[SampleRecord]] = defaultdict(list)
    for rec in records:
        by_sample[rec.sample_key].append(rec)
    lq = _lq_by_sample(records, ratings)

    deltas: dict[tuple[str, str], DeltaScores] = {}
    skipped: list[tuple[str, str]] = []
    for piece, style in sorted({rec.pair_key for rec in records}):
        cands = by_sample.get((piece, style, CANDIDATE))
        refs = by_sample.get((piece, style, REFERENCE))
        if not cands or not refs:
            skipped.append((piece, style))
            continue
        eq_delta = _mean_eq(cands) - _mean_eq(refs)
        lq_c = lq.get((piece, style, CANDIDATE))
        lq_r = lq.get((piece, style, REFERENCE))
        lq_delta = lq_c - lq_r if lq_c is not None and lq_r is not None else None
        deltas[(piece, style)] = DeltaScores(tuple(float(d) for d in eq_delta), lq_delta)
    return deltas, skipped


def _lq_by_sample(
    records: list[SampleRecord], ratings: list[ListenerRating] | None
) -> dict[tuple[str, str, str], float | None]:
    values: dict[tuple[str, str, str], list[float]] = defaultdict(list)
    if ratings:
        for rating in ratings:
            values[(rating.piece_id, rating.style, rating.system)].append(float(rating.lq1))
    else:
        for rec in records:
            if rec.lq1 is not None:
                values[rec.sample_key].append(float(rec.lq1))
    return {key: float(np.mean(v)) for key, v in values.items() if v}


# --- the four comparison tables ---------------------------------------------------------


@dataclass
class ComparisonTable:
    title: str
    row_names: list[str]
    col_names: list[str]
    cells: dict[tuple[str, str], CorrelationCell] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "title": self.title,
            "rows": self.row_names,
            "columns": self.col_names,
            "cells": {
                f"{row}|{col}": (
                    {"r": cell.r, "p": cell.p, "n": cell.n, "stars": cell.stars}
                    if cell.defined
                    else {"status": cell.status, "n": cell.n}
                )
                for (row, col), cell in self.cells.items()
            },
        }

    def formatted(self) -> str:
        width = max(12, *(len(r) + 2 for r in self.row_names))
        lines = [self.title, "-" * len(self.title)]
        header = " " * width + "".join(f"{c:>10}" for c in self.col_names)
        lines.append(header)
        for row in self.row_names:
            cells = []
            for col in self.col_names:
                cell = self.cells.get((row, col))
                cells.append(f"{cell.formatted() if cell else '--':>10}")
            lines.append(f"{row:<{width}}" + "".join(cells))
        return "\n".join(lines)


def _sample_aggregates(
    records: list[SampleRecord], ratings: list[ListenerRating] | None
) -> dict[tuple[str, str, str], dict[str, float | None]]:
    by_sample: dict[tuple[str, str, str], list[SampleRecord]] = defaultdict(list)
    for rec in records:
        by_sample[rec.sample_key].append(rec)
    lq = _lq_by_sample(records, ratings)
    out = {}
    for key, recs in by_sample.items():
        metrics = np.mean([r.metrics.as_tuple() for r in recs], axis=0)
        eq = _mean_eq(recs)
        out[key] = {
            "time": float(metrics[0]),
            "keyboard": float(metrics[1]),
            "mouse": float(metrics[2]),
            "EQ1": float(eq[0]),
            "EQ2": float(eq[1]),
            "EQ3": float(eq[2]),
            "LQ1": lq.get(key),
        }
    return out


def _cell(points: list[tuple[float, float]]) -> CorrelationCell:
    if len(points) < 3:
        return CorrelationCell(None, None, len(points), status="insufficient data")
    xs, ys = zip(*points)
    return pearson(xs, ys)


@dataclass
class ComparisonSets:
    set1: ComparisonTable
    set2: ComparisonTable
    set3: ComparisonTable
    set4: ComparisonTable

    def tables(self) -> list[ComparisonTable]:
        return [self.set1, self.set2, self.set3, self.set4]

    def to_json(self) -> str:
        return json.dumps([t.to_json_dict() for t in self.tables()], indent=2)

    def formatted(self) -> str:
        return "\n\n".join(t.formatted() for t in self.tables())


def comparison_sets(
    records: list[SampleRecord],
    ratings: list[ListenerRating] | None = None,
    per_response: bool = False,
) -> ComparisonSets:
    """Build the four correlation tables.

    Set 1: raw loading metrics against EQ/LQ ratings, one point per sample
    (per editor response when `per_response`). Set 2: per-piece performance
    ratios against rating deltas. Set 3: EQ against EQ/LQ. Set 4: the same
    over deltas.
    """
    samples = _sample_aggregates(records, ratings)
    rating_cols = list(EQ_NAMES) + ["LQ1"]

    metric_labels = {"time": "Time", "keyboard": "Keyboard", "mouse": "Mouse"}
    set1 = ComparisonTable("Comparison set 1", list(metric_labels.values()), rating_cols)
    lq = _lq_by_sample(records, ratings)
    for metric, label in metric_labels.items():
        for col in rating_cols:
            points = []
            if per_response and col != "LQ1":
                for rec in records:
                    metric_value = dict(zip(METRIC_NAMES, rec.metrics.as_tuple()))[metric]
                    points.append((metric_value, float(rec.eq[EQ_NAMES.index(col)])))
            elif per_response and col == "LQ1":
                for rec in records:
                    lq_value = lq.get(rec.sample_key)
                    if lq_value is not None:
                        metric_value = dict(zip(METRIC_NAMES, rec.metrics.as_tuple()))[metric]
                        points.append((metric_value, lq_value))
            else:
                for agg in samples.values():
                    if agg[col] is not None:
                        points.append((agg[metric], agg[col]))
            set1.cells[(label, col)] = _cell(points)

    deltas, _ = delta_scores(records, ratings)
    per_pair_ratios = pairwise_ratios(records)
    delta_cols = ["dEQ1", "dEQ2", "dEQ3", "dLQ1"]
    ratio_labels = {"time": "Time (ratio)", "keyboard": "Keyboard (ratio)", "mouse": "Mouse (ratio)"}
    set2 = ComparisonTable("Comparison set 2", list(ratio_labels.values()), delta_cols)
    for metric, label in ratio_labels.items():
        for k, col in enumerate(delta_cols):
            points = []
            for pair, delta in deltas.items():
                ratios = [q.get(metric) for q in per_pair_ratios.get(pair, [])]
                ratios = [v for v in ratios if v is not None]
                if not ratios:
                    continue
                y = delta.lq1 if col == "dLQ1" else delta.eq[k]
                if y is None:
                    continue
                points.append((float(np.mean(ratios)), y))
            set2.cells[(label, col)] = _cell(points)

    set3 = ComparisonTable("Comparison set 3", list(EQ_NAMES), rating_cols)
    for i, row in enumerate(EQ_NAMES):
        for col in rating_cols:
            if col in EQ_NAMES and EQ_NAMES.index(col) <= i:
                continue
            points = []
            for agg in samples.values():
                if agg[col] is not None:
                    points.append((agg[row], agg[col]))
            set3.cells[(row, col)] = _cell(points)

    set4 = ComparisonTable("Comparison set 4", ["dEQ1", "dEQ2", "dEQ3"], delta_cols)
    for i in range(3):
        for k, col in enumerate(delta_cols):
            if col.startswith("dEQ") and k <= i:
                continue
            points = []
            for delta in deltas.values():
                y = delta.lq1 if col == "dLQ1" else delta.eq[k]
                if y is None:
                    continue
                points.append((delta.eq[i], y))
            set4.cells[(f"dEQ{i + 1}", col)] = _cell(points)

    return ComparisonSets(set1, set2, set3, set4)


def format_ratio_table(records: list[SampleRecord], styles: tuple[str, ...] = ("bach", "jazz")) -> str:
    """Per-style mean +- std performance ratios (the loading-ratio summary)."""
    labels = {"time": "Time", "keyboard": "Keyboard", "mouse": "Mouse"}
    lines = ["Performance ratio" + "".join(f"{('To ' + s.capitalize()):>16}" for s in styles)]
    aggregates = {style: aggregate_ratios(records, style) for style in styles}
    for metric, label in labels.items():
        row = f"{label:<17}"
        for style in styles:
            agg = aggregates[style][metric]
            row += f"{agg.formatted() if agg else 'n/a':>16}"
        lines.append(row)
    excluded = sum(
        agg[m].excluded for agg in aggregates.values() for m in METRIC_NAMES if agg[m]
    )
    if excluded:
        lines.append(f"(excluded {excluded} undefined ratio cells)")
    return "\n".join(lines)


def ratio_table_json(records: list[SampleRecord], styles: tuple[str, ...] = ("bach", "jazz")) -> str:
    payload = {}
    for style in styles:
        payload[style] = {
            metric: (
                {"mean": agg.mean, "std": agg.std, "n": agg.n, "excluded": agg.excluded}
                if agg
                else None
            )
            for metric, agg in aggregate_ratios(records, style).items()
        }
    return json.dumps(payload, indent=2)
