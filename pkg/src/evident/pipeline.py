"""End-to-end assembly: timelines + evidence + labels -> trained risk model.

This is the batch driver shared by the CLI and the evaluation protocol:
filter, split, retrieve, label, subsample, featurize, train, evaluate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, filter_long_records, split_timeline, subsample_negatives
from .embedder import Embedder
from .errors import CorpusError
from .evaluation import MetricReport, evaluate_model
from .evidence import EvidenceSnippet, Query, all_ehr_for_timeline, format_for_model, retrieve_for_timeline
from .gateway import Backend
from .labeler import ConditionSet, DiagnosisLabel, label_patient, labels_by_patient
from .nam import TrainConfig, TrainResult, train

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    split_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    negative_rate: float = 0.2
    max_reports: int = 200
    threshold: float = 0.5
    evidence_source: str = "llm"  # llm | all_ehr
    all_ehr_limit: int = 1000


@dataclass
class PipelineRun:
    result: TrainResult
    test_report: MetricReport
    evidence: dict[str, list[EvidenceSnippet]]
    labels: list[DiagnosisLabel]
    examples: dict[str, list]  # split name -> list of (features, labels)
    snippets_per_example: dict[str, list[list[EvidenceSnippet]]]


def featurize(snippets: Sequence[EvidenceSnippet], embedder: Embedder) -> np.ndarray:
    """Stack embeddings of the model-facing snippet renderings into (E, d)."""
    if not snippets:
        return np.zeros((0, embedder.spec.dimension))
    return np.stack([embedder.embed(format_for_model(s)) for s in snippets])


def build_examples(
    patient_ids: Sequence[str],
    evidence: Mapping[str, Sequence[EvidenceSnippet]],
    label_sets: Mapping[str, set[str]],
    conditions: Sequence[str],
    embedder: Embedder,
) -> tuple[list, list[list[EvidenceSnippet]]]:
    """Per-patient (features, labels) pairs plus the aligned snippet lists."""
    examples = []
    snippet_lists = []
    for pid in patient_ids:
        snippets = list(evidence.get(pid, ()))
        positives = label_sets.get(pid, set())
        labels = np.array([1.0 if c in positives else 0.0 for c in conditions])
        examples.append((featurize(snippets, embedder), labels))
        snippet_lists.append(snippets)
    return examples, snippet_lists


def split_all_timelines(corpus: Corpus, seed: int) -> Corpus:
    """Assign past/future boundaries; patients with one report are dropped."""
    kept = []
    dropped = 0
    for patient in corpus:
        if len(patient.reports) < 2:
            dropped += 1
            continue
        kept.append(split_timeline(patient, seed))
    if dropped:
        logger.warning("dropped %d single-report patients (cannot split)", dropped)
    if not kept:
        raise CorpusError("no patient has 2 or more reports")
    return corpus.with_patients(kept)


def run_training_pipeline(
    corpus: Corpus,
    splits: Mapping[str, Sequence[str]],
    queries: Sequence[Query],
    gateway: Backend,
    feature_embedder: Embedder,
    sim_embedder: Embedder,
    conditions: ConditionSet,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineRun:
    """Run the full batch pipeline on pre-assigned corpus splits.

    Evidence comes from the past partition only; labels from the future
    partition only. Negative subsampling applies to the training split.
    """
    corpus = filter_long_records(corpus, config.max_reports)
    corpus = split_all_timelines(corpus, config.split_seed)
    in_corpus = {p.patient_id for p in corpus}

    split_ids = {
        name: [pid for pid in splits.get(name, ()) if pid in in_corpus]
        for name in ("train", "validation", "test")
    }

    evidence: dict[str, list[EvidenceSnippet]] = {}
    labels: list[DiagnosisLabel] = []
    for name, ids in split_ids.items():
        for pid in ids:
            timeline = corpus.get(pid)
            if config.evidence_source == "all_ehr":
                evidence[pid] = all_ehr_for_timeline(timeline, limit=config.all_ehr_limit)
            else:
                evidence[pid] = retrieve_for_timeline(timeline, queries, gateway)
            labels.extend(
                label_patient(timeline.future, conditions, gateway, sim_embedder)
            )
    label_sets = labels_by_patient(labels)

    train_patients = subsample_negatives(
        [corpus.get(pid) for pid in split_ids["train"]],
        label_sets,
        rate=config.negative_rate,
        seed=config.split_seed,
    )
    train_ids = [p.patient_id for p in train_patients]

    examples: dict[str, list] = {}
    snippets_per_example: dict[str, list[list[EvidenceSnippet]]] = {}
    for name, ids in (("train", train_ids), ("validation", split_ids["validation"]), ("test", split_ids["test"])):
        examples[name], snippets_per_example[name] = build_examples(
            ids, evidence, label_sets, conditions.conditions, feature_embedder
        )

    result = train(
        examples["train"],
        examples["validation"],
        conditions.conditions,
        feature_embedder.spec.embedder_id,
        config.train,
    )
    test_report = evaluate_model(
        result.model, examples["test"], threshold=config.threshold, seed=config.split_seed
    )
    return PipelineRun(
        result=result,
        test_report=test_report,
        evidence=evidence,
        labels=labels,
        examples=examples,
        snippets_per_example=snippets_per_example,
    )
