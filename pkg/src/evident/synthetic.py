"""Desk-scale synthetic corpora with known ground truth.

Positive patients carry planted symptom sentences in their first report
(always in the past partition) and a confident-diagnosis sentence in their
final report (always in the future partition once a timeline is split), so
retrieval, labeling, training, and ranking can all be verified end to end.
``gateway_rules`` derives the mock-backend fixture that makes the gate and
extraction prompts behave consistently with the planted text.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta
from pathlib import Path

from .corpus import Corpus, PatientTimeline, Report
from .errors import CorpusError
from .evidence import Query
from .gateway import FixtureRule
from .stablehash import stable_uniform

DISTRACTOR_SENTENCES = (
    "Vital signs within normal limits.",
    "Patient resting comfortably in bed.",
    "Family present at bedside for update.",
    "Diet advanced as tolerated without issue.",
    "Ambulating in hallway with assistance.",
    "Medication list reviewed and reconciled.",
    "Skin intact, no pressure injuries noted.",
    "Plan discussed with the care team.",
    "Overnight events unremarkable per report.",
    "Follow-up labs ordered for the morning.",
)

# Class-independent sentences that still surface as evidence via the mock
# rules, giving the additive head genuinely uninformative snippets to learn
# to ignore. Each entry is (risk-factor query term, planted sentence).
NEUTRAL_FINDINGS = (
    ("tiredness", "The patient reports feeling tired most days."),
    ("back pain", "The patient complains of mild back pain."),
)


@dataclass(frozen=True)
class ConditionSpec:
    prevalence: float
    symptom_phrases: tuple[str, ...]
    diagnosis_phrases: tuple[str, ...]

    def __post_init__(self) -> None:
        if not (0 < self.prevalence < 1):
            raise CorpusError(f"prevalence must be in (0, 1), got {self.prevalence}")
        if not self.symptom_phrases or not self.diagnosis_phrases:
            raise CorpusError("each condition needs symptom and diagnosis phrase banks")


@dataclass(frozen=True)
class SyntheticSpec:
    patients: int
    conditions: dict[str, ConditionSpec]
    reports_min: int = 6
    reports_max: int = 12

    def __post_init__(self) -> None:
        if self.patients < 1:
            raise CorpusError("patients must be >= 1")
        if not self.conditions:
            raise CorpusError("at least one condition required")
        if not (2 <= self.reports_min <= self.reports_max):
            raise CorpusError("need 2 <= reports_min <= reports_max")


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        conditions = {
            name: ConditionSpec(
                prevalence=c["prevalence"],
                symptom_phrases=tuple(c["symptom_phrases"]),
                diagnosis_phrases=tuple(c["diagnosis_phrases"]),
            )
            for name, c in raw["conditions"].items()
        }
        return SyntheticSpec(
            patients=raw["patients"],
            conditions=conditions,
            reports_min=raw.get("reports_min", 6),
            reports_max=raw.get("reports_max", 12),
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"bad synthetic spec {path}: {exc}") from exc


def save_synthetic_spec(spec: SyntheticSpec, path: str | Path) -> None:
    payload = {
        "patients": spec.patients,
        "reports_min": spec.reports_min,
        "reports_max": spec.reports_max,
        "conditions": {
            name: {
                "prevalence": c.prevalence,
                "symptom_phrases": list(c.symptom_phrases),
                "diagnosis_phrases": list(c.diagnosis_phrases),
            }
            for name, c in spec.conditions.items()
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def demo_spec(patients: int = 40) -> SyntheticSpec:
    """The built-in three-condition spec used by tests and the CLI default."""
    return SyntheticSpec(
        patients=patients,
        conditions={
            "cancer": ConditionSpec(
                prevalence=0.45,
                symptom_phrases=(
                    "A suspicious mass was noted on imaging.",
                    "The patient has experienced unexplained weight loss.",
                    "Enlarged lymph nodes were palpated on exam.",
                ),
                diagnosis_phrases=(
                    "Biopsy results confirm malignancy.",
                    "Oncology confirms a definitive diagnosis of carcinoma.",
                ),
            ),
            "pneumonia": ConditionSpec(
                prevalence=0.4,
                symptom_phrases=(
                    "The patient has a productive cough with fever.",
                    "Coarse crackles were heard in the right lower lobe.",
                    "The white blood cell count is markedly elevated.",
                ),
                diagnosis_phrases=(
                    "Chest x-ray confirms consolidation consistent with pneumonia.",
                    "Sputum culture confirms the pneumonia diagnosis.",
                ),
            ),
            "pulmonary edema": ConditionSpec(
                prevalence=0.35,
                symptom_phrases=(
                    "The patient is dyspneic with bilateral rales.",
                    "Echocardiogram shows a reduced ejection fraction.",
                    "Lower extremity pitting edema is worsening.",
                ),
                diagnosis_phrases=(
                    "Imaging confirms florid pulmonary edema.",
                    "The decompensation is attributed to confirmed pulmonary edema.",
                ),
            ),
        },
        reports_min=6,
        reports_max=12,
    )


def planted_conditions(spec: SyntheticSpec, seed: int, patient_id: str) -> list[str]:
    """Ground-truth condition assignment for one synthetic patient."""
    return [
        name
        for name, cond in spec.conditions.items()
        if stable_uniform("synth-label", seed, patient_id, name) < cond.prevalence
    ]


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int) -> Corpus:
    """Deterministic corpus with planted symptoms, diagnoses, and distractors."""
    rng = random.Random(seed)
    report_types = ("nursing", "physician", "radiology")
    patients = []
    for i in range(spec.patients):
        pid = f"p{i:04d}"
        positives = planted_conditions(spec, seed, pid)
        n_reports = rng.randint(spec.reports_min, spec.reports_max)
        day = Date(2019, 1, 1) + timedelta(days=rng.randint(0, 120))
        reports = []
        for idx in range(n_reports):
            sentences = rng.sample(DISTRACTOR_SENTENCES, k=rng.randint(2, 4))
            last = idx == n_reports - 1
            if idx == 0:
                for name in positives:
                    sentences.insert(
                        rng.randrange(len(sentences) + 1),
                        rng.choice(spec.conditions[name].symptom_phrases),
                    )
                if rng.random() < 0.4:
                    # Planted together: lone uninformative snippets make
                    # degenerate one-snippet evidence pools.
                    for _, finding in NEUTRAL_FINDINGS:
                        sentences.append(finding)
            elif not last:
                for name in positives:
                    if rng.random() < 0.4:
                        sentences.insert(
                            rng.randrange(len(sentences) + 1),
                            rng.choice(spec.conditions[name].symptom_phrases),
                        )
            text = " ".join(sentences)
            span = None
            if last and positives:
                for name in positives:
                    text += " " + rng.choice(spec.conditions[name].diagnosis_phrases)
                if rng.random() < 0.3:
                    # Admitting line names an arbitrary condition; it is marked
                    # so label extraction can excise it before prompting.
                    admit = f"Admitting Diagnosis: {rng.choice(list(spec.conditions))}\n"
                    text = admit + text
                    span = (0, len(admit))
            reports.append(
                Report(
                    report_id=f"{pid}-r{idx:03d}",
                    patient_id=pid,
                    date=day,
                    report_type="discharge summary" if last else rng.choice(report_types),
                    text=text,
                    admitting_diagnosis_span=span,
                )
            )
            day += timedelta(days=rng.randint(1, 3))
        patients.append(PatientTimeline(patient_id=pid, reports=tuple(reports)))
    return Corpus(patients=patients)


def _confidence_profile(*key: object) -> tuple[float, ...]:
    """Per-rule token log-probabilities so confidence sorting has signal."""
    mean = -0.05 - 0.9 * stable_uniform("synth-conf", *key)
    return (round(mean, 6),) * 4


def _diagnosis_chain_rules(spec: SyntheticSpec) -> list[FixtureRule]:
    """Extraction and term-listing rules for every condition subset.

    A report can state confident diagnoses for several conditions at once;
    with first-match-wins rule resolution the only way to answer all of
    them is one rule per subset, most specific first.
    """
    names = list(spec.conditions)
    rules: list[FixtureRule] = []
    for size in range(len(names), 0, -1):
        for subset in itertools.combinations(names, size):
            joined = ", ".join(subset)
            chain_text = f"The report documents definitive findings. The correct diagnosis is: {joined}."
            for phrase_combo in itertools.product(
                *(spec.conditions[name].diagnosis_phrases for name in subset)
            ):
                rules.append(
                    FixtureRule(
                        "substring_all",
                        ("What is the correct diagnosis", *phrase_combo),
                        chain_text,
                    )
                )
            rules.append(
                FixtureRule(
                    "substring_all",
                    ("Provide a list of diagnostic terms", f"The correct diagnosis is: {joined}."),
                    joined,
                )
            )
    return rules


def gateway_rules(spec: SyntheticSpec) -> list[FixtureRule]:
    """Mock-backend rules consistent with the planted corpus text.

    Gate prompts answer Yes exactly when the queried condition's planted
    sentence appears in the prompt input; extraction prompts return the
    planted sentence itself. The diagnosis chain answers from the planted
    confident-diagnosis sentences.
    """
    rules: list[FixtureRule] = []
    for name, cond in spec.conditions.items():
        for s in cond.symptom_phrases:
            rules.append(FixtureRule("substring_all", (f"Is the patient at risk of {name}?", s), "Yes"))
            rules.append(
                FixtureRule(
                    "substring_all",
                    (f"why is the patient at risk of {name}?", s),
                    s,
                    token_logprobs=_confidence_profile(name, s, "risk"),
                )
            )
            rules.append(FixtureRule("substring_all", (f"Does the patient have {name}?", s), "Yes"))
            rules.append(
                FixtureRule(
                    "substring_all",
                    (f"Extract signs of {name} from the note.", s),
                    s,
                    token_logprobs=_confidence_profile(name, s, "signs"),
                )
            )
        for d in cond.diagnosis_phrases:
            rules.append(FixtureRule("substring_all", ("Is there a confident diagnosis", d), "Yes"))
    rules.extend(_diagnosis_chain_rules(spec))
    for term, finding in NEUTRAL_FINDINGS:
        rules.append(FixtureRule("substring_all", (f"Does the patient have {term}?", finding), "Yes"))
        rules.append(
            FixtureRule(
                "substring_all",
                (f"What evidence is there that the patient has {term}?", finding),
                finding,
                token_logprobs=_confidence_profile(term, finding),
            )
        )
    return rules


def queries_for(spec: SyntheticSpec) -> list[Query]:
    """Risk and signs queries per condition plus the neutral risk factors."""
    queries = []
    for name in spec.conditions:
        queries.append(Query(term=name, kind="risk"))
        queries.append(Query(term=name, kind="signs"))
    for term, _ in NEUTRAL_FINDINGS:
        queries.append(Query(term=term, kind="risk_factor"))
    return queries
