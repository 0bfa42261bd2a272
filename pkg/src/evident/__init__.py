"""Evidence-backed interpretable risk prediction over longitudinal clinical notes."""

from .corpus import (
    Corpus,
    CorpusSplit,
    PatientTimeline,
    Report,
    filter_long_records,
    load_corpus,
    make_splits,
    split_timeline,
    strip_admitting_diagnosis,
    subsample_negatives,
)
from .errors import CorpusError, EvidentError, GatewayError
from .evidence import EvidenceSnippet, Query, format_for_model, retrieve, retrieve_all
from .gateway import Completion, FixtureRule, MockBackend, PromptTemplate, parse_binary, render
from .labeler import ConditionSet, DiagnosisLabel, label_patient, normalize
from .metrics import auroc, fleiss_kappa, prf1
from .nam import Prediction, RiskModel, predict, prior, recalibrate, train, vote
from .ranker import RankedEvidence, mark_duplicates, mse_score, rank
from .synthetic import SyntheticSpec, generate_synthetic_corpus

__version__ = "0.1.0"

__all__ = [
    "Completion",
    "ConditionSet",
    "Corpus",
    "CorpusError",
    "CorpusSplit",
    "DiagnosisLabel",
    "EvidenceSnippet",
    "EvidentError",
    "FixtureRule",
    "GatewayError",
    "MockBackend",
    "PatientTimeline",
    "Prediction",
    "PromptTemplate",
    "Query",
    "RankedEvidence",
    "Report",
    "RiskModel",
    "SyntheticSpec",
    "auroc",
    "filter_long_records",
    "fleiss_kappa",
    "format_for_model",
    "generate_synthetic_corpus",
    "label_patient",
    "load_corpus",
    "make_splits",
    "mark_duplicates",
    "mse_score",
    "normalize",
    "parse_binary",
    "predict",
    "prf1",
    "prior",
    "rank",
    "recalibrate",
    "render",
    "retrieve",
    "retrieve_all",
    "split_timeline",
    "strip_admitting_diagnosis",
    "subsample_negatives",
    "train",
    "vote",
]
