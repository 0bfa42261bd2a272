from __future__ import annotations

import csv

import numpy as np
import pytest

from evident.evaluation import (
    AnnotationStats,
    MetricReport,
    annotation_stats,
    dataset_histograms,
    evaluate,
    evaluate_model,
    evidence_count_ablation,
    multi_seed_eval,
    write_ablation_csv,
    write_histograms_csv,
    write_metrics_csv,
    write_query_usefulness_csv,
)
from evident.nam import RiskModel, inverse_sigmoid

CONDITIONS = ("cancer", "pneumonia")


def make_model(w, prevalence=(0.5, 0.5)):
    w = np.asarray(w, dtype=np.float64)
    return RiskModel(
        conditions=CONDITIONS[: w.shape[0]],
        weights=w,
        biases=inverse_sigmoid(np.asarray(prevalence[: w.shape[0]])),
        train_prevalence=np.asarray(prevalence[: w.shape[0]]),
        embedder_id="test",
        d=w.shape[1],
    )


class TestEvaluate:
    def test_macro_is_unweighted_mean(self):
        probs = np.array([[0.9, 0.2], [0.1, 0.8], [0.7, 0.3], [0.2, 0.9]])
        labels = np.array([[1, 0], [0, 1], [1, 0], [0, 1]])
        report = evaluate(probs, labels, CONDITIONS)
        values = list(report.per_condition.values())
        assert report.macro.auroc == pytest.approx(sum(v.auroc for v in values) / 2, abs=1e-12)
        assert report.macro.f1 == pytest.approx(sum(v.f1 for v in values) / 2, abs=1e-12)
        assert report.n_examples == 4

    def test_single_class_condition_absent_from_macro(self):
        probs = np.array([[0.9, 0.4], [0.1, 0.6]])
        labels = np.array([[1, 1], [0, 1]])
        report = evaluate(probs, labels, CONDITIONS)
        assert report.per_condition["pneumonia"].auroc is None
        assert report.macro.auroc == report.per_condition["cancer"].auroc


class TestEvidenceCountAblation:
    def _world(self):
        # one separating direction per condition
        model = make_model([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        rng = np.random.default_rng(0)
        examples = []
        for _ in range(20):
            labels = rng.integers(0, 2, size=2).astype(float)
            strong = np.array([labels[0] * 2 - 1, labels[1] * 2 - 1, 0.0])
            noise = [np.array([0.0, 0.0, 1.0]) for _ in range(int(rng.integers(1, 4)))]
            features = np.stack([strong, *noise])
            examples.append((features, labels))
        return model, examples

    def test_k_zero_is_prior(self):
        model, examples = self._world()
        report = evidence_count_ablation(model, examples, [0])[0]
        # constant prior scores: every pair ties -> AUROC exactly 0.5
        assert report.macro.auroc == 0.5

    def test_k_at_least_max_evidence_matches_full(self):
        model, examples = self._world()
        by_k = evidence_count_ablation(model, examples, [100])
        full = evaluate_model(model, examples)
        assert by_k[100].per_condition == full.per_condition

    def test_top_k_keeps_highest_mse_snippets(self):
        model, examples = self._world()
        # k=1 keeps the strong (label-aligned) snippet: AUROC 1.0
        report = evidence_count_ablation(model, examples, [1])[1]
        assert report.macro.auroc == 1.0

    def test_non_decreasing_up_to_noise(self):
        model, examples = self._world()
        by_k = evidence_count_ablation(model, examples, [1, 2, 5, 100])
        aurocs = [by_k[k].macro.auroc for k in (1, 2, 5, 100)]
        for previous, current in zip(aurocs, aurocs[1:]):
            assert current >= previous - 0.03


def session_record(
    annotator="a1",
    patient="p0",
    variant="llm_logodds",
    usefulness_list=(),
    report_count=5,
    votes=((0.5, 1.2), (0.5, -0.3)),
):
    evidence = []
    for i, max_level in enumerate(usefulness_list):
        evidence.append(
            {
                "rank": i + 1,
                "text": f"snippet {i}",
                "query": "pneumonia",
                "relative_day": -i,
                "duplicate_of": None,
                "votes": {
                    "cancer": {"probability": votes[0][0], "log_odds": votes[0][1]},
                    "pneumonia": {"probability": votes[1][0], "log_odds": votes[1][1]},
                },
                "annotation": {"usefulness": {"cancer": "not_relevant", "pneumonia": max_level}},
            }
        )
    return {
        "kind": "session",
        "session_id": f"s-{annotator}-{patient}",
        "annotator_id": annotator,
        "patient_id": patient,
        "model_variant": variant,
        "report_count": report_count,
        "evidence": evidence,
    }


class TestAnnotationStats:
    def test_single_annotator_percent_useful(self):
        sessions = [
            session_record(usefulness_list=["useful", "very_useful", "not_relevant", "weakly_correlated"])
        ]
        stats = annotation_stats(sessions)
        assert stats.per_annotator[0]["evidence"] == 4
        assert stats.per_annotator[0]["percent_useful"] == pytest.approx(50.0)

    def test_macro_average_over_annotators(self):
        sessions = [
            session_record(annotator="a1", usefulness_list=["useful", "not_relevant"]),  # 50%
            session_record(
                annotator="a2",
                patient="p1",
                usefulness_list=["useful", "not_relevant", "weakly_correlated", "not_relevant",
                                 "not_relevant", "not_relevant", "useful", "useful", "not_relevant", "weakly_correlated"],
            ),  # 30%
        ]
        stats = annotation_stats(sessions)
        assert stats.aggregated["percent_useful"] == pytest.approx(40.0)
        assert stats.aggregated["instances"] == 2
        assert stats.aggregated["evidence"] == 12

    def test_duplicates_excluded_when_flagged(self):
        session = session_record(usefulness_list=["useful", "useful"])
        session["evidence"][1]["duplicate_of"] = 1
        with_flag = annotation_stats([session], exclude_duplicates=True)
        without_flag = annotation_stats([session], exclude_duplicates=False)
        assert with_flag.per_annotator[0]["evidence"] == 1
        assert without_flag.per_annotator[0]["evidence"] == 2

    def test_usefulness_by_variant_and_query(self):
        sessions = [
            session_record(variant="llm_logodds", usefulness_list=["useful"]),
            session_record(patient="p1", variant="allehr_logodds", usefulness_list=["not_relevant"]),
        ]
        stats = annotation_stats(sessions)
        assert stats.usefulness_by_variant["llm_logodds"]["useful"] == 1
        assert stats.usefulness_by_variant["allehr_logodds"]["not_relevant"] == 1
        assert stats.usefulness_by_query["pneumonia"]["useful"] == 1

    def test_vote_histogram_collected(self):
        stats = annotation_stats([session_record(usefulness_list=["useful"])])
        assert sorted(stats.vote_log_odds) == [-0.3, 1.2]
        assert stats.evidence_counts == [1]


class TestMultiSeedEval:
    def _constant_report(self, value=0.8):
        metrics = {"cancer": value, "pneumonia": value}
        from evident.evaluation import ConditionMetrics

        per = {name: ConditionMetrics(auroc=v, precision=v, recall=v, f1=v) for name, v in metrics.items()}
        macro = ConditionMetrics(auroc=value, precision=value, recall=value, f1=value)
        return MetricReport(per_condition=per, macro=macro, n_examples=4, seed=0)

    def test_constant_trainer_zero_std(self):
        mean, std = multi_seed_eval(lambda seed: self._constant_report(), [0, 1, 2])
        assert mean.macro.auroc == pytest.approx(0.8)
        assert std.macro.auroc == pytest.approx(0.0, abs=1e-15)

    def test_single_seed_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            multi_seed_eval(lambda seed: self._constant_report(), [0])

    def test_mean_and_std_of_varying_values(self):
        values = {0: 0.6, 1: 0.8, 2: 1.0}
        mean, std = multi_seed_eval(lambda seed: self._constant_report(values[seed]), [0, 1, 2])
        assert mean.macro.auroc == pytest.approx(0.8)
        assert std.macro.auroc == pytest.approx(np.std([0.6, 0.8, 1.0]))


class TestCsvWriters:
    def test_metrics_csv(self, tmp_path):
        probs = np.array([[0.9, 0.2], [0.1, 0.8]])
        labels = np.array([[1, 0], [0, 1]])
        report = evaluate(probs, labels, CONDITIONS)
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, {"seed-0": report})
        rows = list(csv.DictReader(path.open()))
        assert rows[0]["run"] == "seed-0"
        assert rows[0]["condition"] == "cancer"
        assert rows[-1]["condition"] == "macro"
        assert float(rows[-1]["auroc"]) == 1.0

    def test_ablation_csv(self, tmp_path):
        model = make_model([[1.0, 0.0]], prevalence=(0.5,))
        examples = [(np.array([[1.0, 0.0]]), np.array([1.0])), (np.array([[-1.0, 0.0]]), np.array([0.0]))]
        path = tmp_path / "ablation.csv"
        write_ablation_csv(path, evidence_count_ablation(model, examples, [0, 1]))
        rows = list(csv.DictReader(path.open()))
        assert {r["k"] for r in rows} == {"0", "1"}

    def test_query_usefulness_csv(self, tmp_path):
        stats = annotation_stats([session_record(usefulness_list=["useful"])])
        path = tmp_path / "usefulness.csv"
        write_query_usefulness_csv(path, stats)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["group", "key", "not_relevant", "weakly_correlated", "useful", "very_useful"]
        assert ["variant", "llm_logodds", "0", "0", "1", "0"] in rows

    def test_histograms_csv(self, tmp_path):
        model = make_model([[1.0, 0.0]], prevalence=(0.5,))
        examples = [(np.array([[1.0, 0.0], [0.5, 0.0]]), np.array([1.0]))]
        series = dataset_histograms(model, examples)
        assert series["evidence_count"] == [2.0]
        assert series["vote_log_odds"] == [1.0, 0.5]
        path = tmp_path / "hist.csv"
        write_histograms_csv(path, series)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["series", "value"]
        assert ["evidence_count", "2.0"] in rows
