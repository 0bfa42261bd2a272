from __future__ import annotations

import math

import numpy as np
import pytest

from evident.embedder import EmbeddingSpec, HashingEmbedder
from evident.errors import GatewayError
from evident.gateway import MockBackend
from evident.labeler import (
    ConditionSet,
    DiagnosisLabel,
    extract_diagnosis_text,
    has_confident_diagnosis,
    label_patient,
    labels_by_patient,
    list_diagnostic_terms,
    load_labels,
    normalize,
    save_labels,
)

from .conftest import make_report, rule

# Vector pair whose cosine is exactly 0.85 under float64 arithmetic; used to
# pin the strict > threshold behavior.
EXACT_085 = float.fromhex("0x1.0db675df0c582p-1")


class VectorStub:
    """Similarity embedder mapping fixed strings to fixed vectors."""

    def __init__(self, table: dict[str, tuple[float, ...]]):
        self.table = table
        self.spec = EmbeddingSpec(embedder_id="stub", dimension=2, normalized=False)

    def embed(self, text: str) -> np.ndarray:
        return np.asarray(self.table[text], dtype=np.float64)


class TestConditionSet:
    def test_default(self):
        assert tuple(ConditionSet()) == ("cancer", "pneumonia", "pulmonary edema")

    def test_rejects_uppercase(self):
        with pytest.raises(ValueError, match="lowercase"):
            ConditionSet(("Cancer",))

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="unique"):
            ConditionSet(("cancer", "cancer"))

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="non-empty"):
            ConditionSet(())


class TestConfidentDiagnosisGate:
    def test_yes_and_no(self):
        yes = MockBackend(default_response="Yes")
        no = MockBackend(default_response="No")
        assert has_confident_diagnosis(make_report(), yes)
        assert not has_confident_diagnosis(make_report(), no)

    def test_admitting_span_removed_from_prompt(self):
        text = "Admitting Diagnosis: sepsis\nPatient has confirmed pneumonia."
        report = make_report(text=text, span=(0, 28))
        backend = MockBackend(default_response="Yes")
        has_confident_diagnosis(report, backend)
        prompt = backend.call_log[-1]
        assert "Admitting Diagnosis: sepsis" not in prompt
        assert "Patient has confirmed pneumonia." in prompt


class TestExtractDiagnosisText:
    def test_passthrough(self):
        backend = MockBackend(
            [rule("What is the correct diagnosis", "The patient was found to have pneumonia...")]
        )
        assert extract_diagnosis_text(make_report(), backend) == "The patient was found to have pneumonia..."

    def test_whitespace_only_is_error(self):
        backend = MockBackend([rule("What is the correct diagnosis", "  \n")])
        with pytest.raises(GatewayError, match="empty"):
            extract_diagnosis_text(make_report(), backend)

    def test_admitting_span_removed(self):
        text = "Admitting Diagnosis: sepsis\nBody."
        report = make_report(text=text, span=(0, 28))
        backend = MockBackend(default_response="chain text")
        extract_diagnosis_text(report, backend)
        assert "sepsis" not in backend.call_log[-1]


class TestListDiagnosticTerms:
    def _terms(self, completion):
        backend = MockBackend([rule("Provide a list of diagnostic terms", completion)])
        return list_diagnostic_terms("some diagnosis text", backend), backend

    def test_comma_split(self):
        terms, _ = self._terms("pneumonia, sepsis")
        assert terms == ["pneumonia", "sepsis"]

    def test_none_literal_is_empty(self):
        terms, _ = self._terms("None")
        assert terms == []

    def test_list_markers_stripped(self):
        terms, _ = self._terms("- CHF\n- pulmonary edema")
        assert terms == ["CHF", "pulmonary edema"]

    def test_numbered_and_bullet_markers(self):
        terms, _ = self._terms("1. cancer\n2) sepsis\n• anemia")
        assert terms == ["cancer", "sepsis", "anemia"]

    def test_unparseable_yields_empty_with_warning(self, caplog):
        backend = MockBackend([rule("Provide a list of diagnostic terms", "-, ;;")])
        with caplog.at_level("WARNING"):
            assert list_diagnostic_terms("text", backend) == []
        assert "unparseable" in caplog.text

    def test_prompt_contains_only_previous_output(self):
        _, backend = self._terms("x")
        prompt = backend.call_log[-1]
        assert "some diagnosis text" in prompt
        assert "Provide a list of diagnostic terms or write none." in prompt


class TestNormalize:
    def setup_method(self):
        self.targets = ConditionSet()
        self.embedder = HashingEmbedder(128)

    def test_exact_match_case_insensitive(self):
        assert normalize("Pneumonia", self.targets, self.embedder) == "pneumonia"

    def test_substring_containment(self):
        assert normalize("lung cancer", self.targets, self.embedder) == "cancer"

    def test_alias_table(self):
        assert normalize("CHF", self.targets, self.embedder) == "pulmonary edema"
        assert normalize("Congestive Heart Failure", self.targets, self.embedder) == "pulmonary edema"

    def test_unrelated_term_is_none(self):
        # cosine("fracture", target) is 0.0 for all three targets under the
        # reference embedder: no shared tokens
        assert normalize("fracture", self.targets, self.embedder) is None

    def test_threshold_strictly_greater(self):
        stub = VectorStub(
            {
                "cancer": (1.0, 0.0),
                "pneumonia": (-1.0, 0.0),
                "pulmonary edema": (0.0, -1.0),
                "at-threshold": (0.85, EXACT_085),
                "above-threshold": (0.9, math.sqrt(1 - 0.9**2)),
            }
        )
        targets = ConditionSet()
        assert normalize("at-threshold", targets, stub) is None
        assert normalize("above-threshold", targets, stub) == "cancer"

    def test_custom_threshold(self):
        stub = VectorStub(
            {
                "cancer": (1.0, 0.0),
                "pneumonia": (-1.0, 0.0),
                "pulmonary edema": (0.0, -1.0),
                "term": (0.7, math.sqrt(1 - 0.7**2)),
            }
        )
        assert normalize("term", ConditionSet(), stub, threshold=0.6) == "cancer"
        assert normalize("term", ConditionSet(), stub, threshold=0.8) is None

    def test_empty_term_rejected(self):
        with pytest.raises(ValueError):
            normalize("", self.targets, self.embedder)

    def test_exact_match_wins_regardless_of_embedder(self):
        class Exploding:
            spec = EmbeddingSpec(embedder_id="boom", dimension=2, normalized=False)

            def embed(self, text):
                raise RuntimeError("embedder must not be called")

        assert normalize("pneumonia", self.targets, Exploding()) == "pneumonia"


def chain_backend(diagnosis_by_marker: dict[str, str]) -> MockBackend:
    """Mock chain: reports containing a marker produce the mapped term list."""
    rules = []
    for marker, terms in diagnosis_by_marker.items():
        chain_text = f"Diagnosis narrative for {marker}."
        rules.append(rule(("Is there a confident diagnosis", marker), "Yes"))
        rules.append(rule(("What is the correct diagnosis", marker), chain_text))
        rules.append(rule(("Provide a list of diagnostic terms", chain_text), terms))
    return MockBackend(rules)


class TestLabelPatient:
    def setup_method(self):
        self.targets = ConditionSet()
        self.embedder = HashingEmbedder(128)

    def test_earliest_report_wins(self):
        future = [
            make_report(report_id="f1", day=1, text="nothing here."),
            make_report(report_id="f2", day=2, text="MARKER pneumonia confirmed."),
            make_report(report_id="f3", day=3, text="MARKER pneumonia confirmed."),
        ]
        backend = chain_backend({"MARKER pneumonia confirmed.": "pneumonia"})
        labels = label_patient(future, self.targets, backend, self.embedder)
        assert labels == [
            DiagnosisLabel(
                patient_id="p0",
                condition="pneumonia",
                report_id="f2",
                raw_terms=("pneumonia",),
            )
        ]

    def test_no_target_yields_empty(self):
        future = [make_report(report_id="f1", text="unremarkable.")]
        backend = chain_backend({"never": "pneumonia"})
        assert label_patient(future, self.targets, backend, self.embedder) == []

    def test_alias_maps_to_target(self):
        future = [make_report(report_id="f1", text="HEART failure documented.")]
        backend = chain_backend({"HEART failure documented.": "CHF"})
        labels = label_patient(future, self.targets, backend, self.embedder)
        assert [l.condition for l in labels] == ["pulmonary edema"]
        assert labels[0].raw_terms == ("CHF",)

    def test_multiple_conditions_one_report(self):
        future = [make_report(report_id="f1", text="DUAL finding.")]
        backend = chain_backend({"DUAL finding.": "pneumonia; lung cancer"})
        labels = label_patient(future, self.targets, backend, self.embedder)
        assert {l.condition for l in labels} == {"cancer", "pneumonia"}

    def test_failing_report_skipped_with_warning(self, caplog):
        class FlakyBackend(MockBackend):
            def complete(self, prompt):
                if "BAD" in prompt:
                    raise GatewayError("backend down")
                return super().complete(prompt)

        future = [
            make_report(report_id="f1", day=1, text="BAD report."),
            make_report(report_id="f2", day=2, text="MARKER pneumonia."),
        ]
        backend = FlakyBackend(chain_backend({"MARKER pneumonia.": "pneumonia"}).rules)
        with caplog.at_level("WARNING"):
            labels = label_patient(future, self.targets, backend, self.embedder)
        assert [l.report_id for l in labels] == ["f2"]
        assert "skipping report f1" in caplog.text

    def test_deterministic(self):
        future = [make_report(report_id="f1", text="MARKER pneumonia.")]
        results = [
            label_patient(future, self.targets, chain_backend({"MARKER pneumonia.": "pneumonia"}), self.embedder)
            for _ in range(2)
        ]
        assert results[0] == results[1]

    def test_gate_negative_skips_extraction(self):
        backend = MockBackend(default_response="No")
        future = [make_report(report_id="f1", text="quiet.")]
        label_patient(future, self.targets, backend, self.embedder)
        assert all("Is there a confident diagnosis" in p for p in backend.call_log)


class TestLabelFiles:
    def test_round_trip(self, tmp_path):
        labels = [
            DiagnosisLabel("p0", "pneumonia", "r2", ("pneumonia", "sepsis")),
            DiagnosisLabel("p1", "cancer", "r9", ("ca",)),
        ]
        path = tmp_path / "labels.jsonl"
        save_labels(labels, path)
        assert load_labels(path) == labels

    def test_labels_by_patient(self):
        labels = [
            DiagnosisLabel("p0", "pneumonia", "r2", ()),
            DiagnosisLabel("p0", "cancer", "r3", ()),
            DiagnosisLabel("p1", "cancer", "r9", ()),
        ]
        assert labels_by_patient(labels) == {"p0": {"pneumonia", "cancer"}, "p1": {"cancer"}}
