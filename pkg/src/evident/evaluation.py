"""Metric reports, the evidence-count ablation, multi-seed aggregation, and
annotation statistics, plus the CSV emitters for all of them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .metrics import auroc, prf1
from .nam import Example, RiskModel, predict
from .ranker import mse_score

USEFULNESS_LEVELS = ("not_relevant", "weakly_correlated", "useful", "very_useful")


@dataclass(frozen=True)
class ConditionMetrics:
    auroc: float | None
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricReport:
    per_condition: dict[str, ConditionMetrics]
    macro: ConditionMetrics
    n_examples: int
    seed: int


def _macro(values: Sequence[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


def evaluate(
    probabilities: np.ndarray,
    labels: np.ndarray,
    conditions: Sequence[str],
    threshold: float = 0.5,
    seed: int = 0,
) -> MetricReport:
    """Per-condition and macro AUROC/precision/recall/F1.

    A condition with a single label class gets no AUROC; the macro AUROC
    averages only the defined values.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    per_condition = {}
    for i, name in enumerate(conditions):
        scores = prf1(probs[:, i], y[:, i], threshold=threshold)
        per_condition[name] = ConditionMetrics(
            auroc=auroc(probs[:, i], y[:, i]),
            precision=scores.precision,
            recall=scores.recall,
            f1=scores.f1,
        )
    values = list(per_condition.values())
    macro = ConditionMetrics(
        auroc=_macro([v.auroc for v in values]),
        precision=float(np.mean([v.precision for v in values])),
        recall=float(np.mean([v.recall for v in values])),
        f1=float(np.mean([v.f1 for v in values])),
    )
    return MetricReport(per_condition=per_condition, macro=macro, n_examples=len(y), seed=seed)


def evaluate_model(
    model: RiskModel,
    examples: Sequence[Example],
    threshold: float = 0.5,
    seed: int = 0,
) -> MetricReport:
    probs = np.stack([predict(model, f).probabilities for f, _ in examples])
    labels = np.stack([np.asarray(y) for _, y in examples])
    return evaluate(probs, labels, model.conditions, threshold=threshold, seed=seed)


def evidence_count_ablation(
    model: RiskModel,
    examples: Sequence[Example],
    k_values: Sequence[int],
    threshold: float = 0.5,
    seed: int = 0,
) -> dict[int, MetricReport]:
    """Re-evaluate with each example limited to its top-k log-odds snippets.

    k = 0 predicts from the prior alone; k >= E uses all evidence.
    """
    ordered_features = []
    labels = []
    for features, y in examples:
        mat = np.asarray(features, dtype=np.float64).reshape(-1, model.d)
        scores = np.array([mse_score(model, f) for f in mat])
        order = np.argsort(-scores, kind="stable")
        ordered_features.append(mat[order])
        labels.append(np.asarray(y))
    label_matrix = np.stack(labels) if labels else np.zeros((0, len(model.conditions)))
    out = {}
    for k in k_values:
        probs = np.stack(
            [predict(model, mat[:k]).probabilities for mat in ordered_features]
        )
        out[k] = evaluate(probs, label_matrix, model.conditions, threshold=threshold, seed=seed)
    return out


def multi_seed_eval(
    model_trainer: Callable[[int], MetricReport], seeds: Sequence[int]
) -> tuple[MetricReport, MetricReport]:
    """Run the trainer per seed and aggregate to (mean, stddev) reports.

    Population standard deviation; a metric undefined for some seed is
    dropped from that aggregate.
    """
    if len(seeds) < 2:
        raise ValueError("multi-seed evaluation needs at least 2 seeds")
    reports = [model_trainer(seed) for seed in seeds]
    conditions = list(reports[0].per_condition)

    def agg(values: list[float | None]) -> tuple[float | None, float | None]:
        defined = [v for v in values if v is not None]
        if not defined:
            return None, None
        mean = float(np.mean(defined))
        return mean, float(np.std(defined))

    def combine(pick: Callable[[MetricReport], ConditionMetrics]) -> tuple[ConditionMetrics, ConditionMetrics]:
        fields = {}
        for field_name in ("auroc", "precision", "recall", "f1"):
            fields[field_name] = agg([getattr(pick(r), field_name) for r in reports])
        mean = ConditionMetrics(**{k: v[0] for k, v in fields.items()})
        std = ConditionMetrics(**{k: v[1] for k, v in fields.items()})
        return mean, std

    per_mean = {}
    per_std = {}
    for name in conditions:
        per_mean[name], per_std[name] = combine(lambda r, n=name: r.per_condition[n])
    macro_mean, macro_std = combine(lambda r: r.macro)
    n_total = sum(r.n_examples for r in reports)
    return (
        MetricReport(per_condition=per_mean, macro=macro_mean, n_examples=n_total, seed=-1),
        MetricReport(per_condition=per_std, macro=macro_std, n_examples=n_total, seed=-1),
    )


def _max_usefulness(usefulness: Mapping[str, str]) -> str:
    best = 0
    for level in usefulness.values():
        best = max(best, USEFULNESS_LEVELS.index(level))
    return USEFULNESS_LEVELS[best]


@dataclass
class AnnotationStats:
    per_annotator: list[dict]
    aggregated: dict
    usefulness_by_variant: dict[str, dict[str, int]]
    usefulness_by_query: dict[str, dict[str, int]]
    evidence_counts: list[int]
    vote_log_odds: list[float]


def annotation_stats(sessions: Iterable[Mapping], exclude_duplicates: bool = True) -> AnnotationStats:
    """Aggregate exported annotation sessions.

    Instance, evidence, and report counts are summed per annotator and in
    the aggregate; percent-useful (an evidence item counts as useful when
    its best per-condition rating is useful or very_useful) is
    macro-averaged over annotators in the aggregate row. Evidence marked as
    a duplicate of a higher-ranked snippet is excluded when the flag is set.
    """
    per: dict[str, dict] = {}
    by_variant: dict[str, dict[str, int]] = {}
    by_query: dict[str, dict[str, int]] = {}
    evidence_counts: list[int] = []
    votes: list[float] = []
    for session in sessions:
        if session.get("kind", "session") != "session":
            continue
        annotator = session["annotator_id"]
        row = per.setdefault(
            annotator,
            {"annotator_id": annotator, "instances": 0, "evidence": 0, "reports": 0, "useful": 0},
        )
        row["instances"] += 1
        row["reports"] += session.get("report_count", 0)
        variant = session.get("model_variant", "unknown")
        served = session.get("evidence", [])
        evidence_counts.append(len(served))
        for item in served:
            for vote_entry in item.get("votes", {}).values():
                votes.append(vote_entry["log_odds"])
            annotation = item.get("annotation")
            if annotation is None:
                continue
            if exclude_duplicates and item.get("duplicate_of") is not None:
                continue
            level = _max_usefulness(annotation["usefulness"])
            row["evidence"] += 1
            if level in ("useful", "very_useful"):
                row["useful"] += 1
            variant_counts = by_variant.setdefault(variant, dict.fromkeys(USEFULNESS_LEVELS, 0))
            variant_counts[level] += 1
            query = item.get("query") or "(none)"
            query_counts = by_query.setdefault(query, dict.fromkeys(USEFULNESS_LEVELS, 0))
            query_counts[level] += 1

    rows = []
    for annotator in sorted(per):
        row = per[annotator]
        row["percent_useful"] = 100.0 * row["useful"] / row["evidence"] if row["evidence"] else 0.0
        rows.append(row)
    aggregated = {
        "annotator_id": "aggregated",
        "instances": sum(r["instances"] for r in rows),
        "evidence": sum(r["evidence"] for r in rows),
        "reports": sum(r["reports"] for r in rows),
        "useful": sum(r["useful"] for r in rows),
        "percent_useful": float(np.mean([r["percent_useful"] for r in rows])) if rows else 0.0,
    }
    return AnnotationStats(
        per_annotator=rows,
        aggregated=aggregated,
        usefulness_by_variant=by_variant,
        usefulness_by_query=by_query,
        evidence_counts=evidence_counts,
        vote_log_odds=votes,
    )


def dataset_histograms(model: RiskModel, examples: Sequence[Example]) -> dict[str, list[float]]:
    """Histogram series: evidence count per instance, and every log-odds vote."""
    counts: list[float] = []
    votes: list[float] = []
    for features, _ in examples:
        mat = np.asarray(features, dtype=np.float64).reshape(-1, model.d)
        counts.append(float(len(mat)))
        if len(mat):
            votes.extend((mat @ model.weights.T).ravel().tolist())
    return {"evidence_count": counts, "vote_log_odds": votes}


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.6f}"


def write_metrics_csv(
    path: str | Path,
    reports: Mapping[str, MetricReport],
) -> None:
    """One row per (report key, condition) plus a macro row per report.

    Header: run,condition,auroc,precision,recall,f1,n_examples. An empty
    auroc cell means the metric was undefined for that condition.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "condition", "auroc", "precision", "recall", "f1", "n_examples"])
        for run, report in reports.items():
            for name, m in report.per_condition.items():
                writer.writerow([run, name, _fmt(m.auroc), _fmt(m.precision), _fmt(m.recall), _fmt(m.f1), report.n_examples])
            macro = report.macro
            writer.writerow(
                [run, "macro", _fmt(macro.auroc), _fmt(macro.precision), _fmt(macro.recall), _fmt(macro.f1), report.n_examples]
            )


def write_ablation_csv(path: str | Path, by_k: Mapping[int, MetricReport]) -> None:
    """Header: k,condition,auroc,precision,recall,f1."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "condition", "auroc", "precision", "recall", "f1"])
        for k in sorted(by_k):
            report = by_k[k]
            for name, m in report.per_condition.items():
                writer.writerow([k, name, _fmt(m.auroc), _fmt(m.precision), _fmt(m.recall), _fmt(m.f1)])
            macro = report.macro
            writer.writerow([k, "macro", _fmt(macro.auroc), _fmt(macro.precision), _fmt(macro.recall), _fmt(macro.f1)])


def write_query_usefulness_csv(path: str | Path, stats: AnnotationStats) -> None:
    """Header: group,key,not_relevant,weakly_correlated,useful,very_useful."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "key", *USEFULNESS_LEVELS])
        for variant in sorted(stats.usefulness_by_variant):
            counts = stats.usefulness_by_variant[variant]
            writer.writerow(["variant", variant, *(counts[level] for level in USEFULNESS_LEVELS)])
        for query in sorted(stats.usefulness_by_query):
            counts = stats.usefulness_by_query[query]
            writer.writerow(["query", query, *(counts[level] for level in USEFULNESS_LEVELS)])


def write_histograms_csv(path: str | Path, series: Mapping[str, Sequence[float]]) -> None:
    """Header: series,value. One row per raw observation."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "value"])
        for name in series:
            for value in series[name]:
                writer.writerow([name, value if not isinstance(value, float) or math.isfinite(value) else ""])
