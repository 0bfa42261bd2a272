"""Confident-diagnosis label extraction from future reports.

Three sequential prompts: a binary gate for whether the report states a
confident diagnosis, a chain-of-thought extraction of that diagnosis, and
a final prompt that turns only the previous output into a list of
diagnostic terms. Parsed terms are then normalized onto the closed
condition set by string heuristics followed by embedding similarity.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import prompts
from .corpus import Report, strip_admitting_diagnosis
from .embedder import Embedder, cosine
from .errors import CorpusError, GatewayError
from .gateway import Backend, parse_binary, render

logger = logging.getLogger(__name__)

DEFAULT_CONDITIONS = ("cancer", "pneumonia", "pulmonary edema")

# Terms treated as interchangeable with a target condition.
DEFAULT_ALIASES: dict[str, str] = {
    "congestive heart failure": "pulmonary edema",
    "chf": "pulmonary edema",
}

SIMILARITY_THRESHOLD = 0.85


@dataclass(frozen=True)
class ConditionSet:
    conditions: tuple[str, ...] = DEFAULT_CONDITIONS

    def __post_init__(self) -> None:
        if not self.conditions:
            raise ValueError("condition set must be non-empty")
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("condition set must be unique")
        if any(c != c.lower() for c in self.conditions):
            raise ValueError("conditions must be lowercase")

    def __iter__(self):
        return iter(self.conditions)

    def __len__(self) -> int:
        return len(self.conditions)


@dataclass(frozen=True)
class DiagnosisLabel:
    patient_id: str
    condition: str
    report_id: str
    raw_terms: tuple[str, ...]


def has_confident_diagnosis(report: Report, gateway: Backend) -> bool:
    """Gate prompt over the report with any admitting-diagnosis span removed."""
    clean = strip_admitting_diagnosis(report)
    prompt = render(prompts.DIAGNOSIS_GATE, clean.text)
    return parse_binary(gateway.complete(prompt).text)


def extract_diagnosis_text(report: Report, gateway: Backend) -> str:
    """Chain-of-thought extraction of the report's stated diagnosis."""
    clean = strip_admitting_diagnosis(report)
    prompt = render(prompts.DIAGNOSIS_EXTRACT, clean.text)
    text = gateway.complete(prompt).text
    if not text.strip():
        raise GatewayError(f"diagnosis extraction empty for report {report.report_id!r}")
    return text


_LIST_MARKER = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def list_diagnostic_terms(diagnosis_text: str, gateway: Backend) -> list[str]:
    """Turn the previous prompt's output into a list of diagnostic terms.

    The completion is split on newlines, commas, and semicolons; leading
    list markers are stripped. A completion of just 'none' yields the empty
    list, as does anything that parses to nothing.
    """
    prompt = render(prompts.DIAGNOSIS_TERMS, diagnosis_text)
    completion = gateway.complete(prompt).text
    if completion.strip().casefold() == "none":
        return []
    terms = []
    for chunk in re.split(r"[\n,;]+", completion):
        term = _LIST_MARKER.sub("", chunk).strip()
        if term:
            terms.append(term)
    if not terms:
        logger.warning("unparseable diagnostic-term completion %r; treating as empty", completion)
    return terms


def normalize(
    term: str,
    targets: ConditionSet,
    sim_embedder: Embedder,
    aliases: Mapping[str, str] | None = None,
    threshold: float = SIMILARITY_THRESHOLD,
) -> str | None:
    """Map a raw diagnostic term onto the condition set, or None.

    Step 1, string heuristics: case-insensitive exact match, then substring
    containment of a target in the term, then the alias table. Step 2:
    cosine similarity between embeddings; the most similar target wins iff
    its similarity strictly exceeds the threshold.
    """
    if not term:
        raise ValueError("term must be non-empty")
    aliases = DEFAULT_ALIASES if aliases is None else aliases
    lowered = term.strip().lower()
    for target in targets:
        if lowered == target:
            return target
    for target in targets:
        if target in lowered:
            return target
    alias_hit = {k.lower(): v for k, v in aliases.items()}.get(lowered)
    if alias_hit is not None:
        if alias_hit not in targets.conditions:
            raise CorpusError(f"alias {lowered!r} maps to {alias_hit!r}, not a known condition")
        return alias_hit
    term_vec = sim_embedder.embed(term)
    best: str | None = None
    best_sim = -2.0
    for target in targets:
        sim = cosine(term_vec, sim_embedder.embed(target))
        if sim > best_sim:
            best, best_sim = target, sim
    return best if best_sim > threshold else None


def label_patient(
    future: Sequence[Report],
    targets: ConditionSet,
    gateway: Backend,
    sim_embedder: Embedder,
    aliases: Mapping[str, str] | None = None,
    threshold: float = SIMILARITY_THRESHOLD,
) -> list[DiagnosisLabel]:
    """Run the extraction chain over future reports in chronological order.

    Each condition is labeled at the earliest report where the chain plus
    normalization produces it; conditions never produced stay negative. A
    report whose chain fails is skipped with a warning.
    """
    found: dict[str, DiagnosisLabel] = {}
    for report in future:
        if len(found) == len(targets):
            break
        try:
            if not has_confident_diagnosis(report, gateway):
                continue
            diagnosis_text = extract_diagnosis_text(report, gateway)
            raw_terms = list_diagnostic_terms(diagnosis_text, gateway)
        except (GatewayError, CorpusError) as exc:
            logger.warning("skipping report %s: %s", report.report_id, exc)
            continue
        for term in raw_terms:
            condition = normalize(term, targets, sim_embedder, aliases=aliases, threshold=threshold)
            if condition is not None and condition not in found:
                found[condition] = DiagnosisLabel(
                    patient_id=report.patient_id,
                    condition=condition,
                    report_id=report.report_id,
                    raw_terms=tuple(raw_terms),
                )
    return [found[c] for c in targets if c in found]


def save_labels(labels: Iterable[DiagnosisLabel], path: str | Path) -> None:
    """Write labels as JSON Lines."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(
                json.dumps(
                    {
                        "patient_id": label.patient_id,
                        "condition": label.condition,
                        "report_id": label.report_id,
                        "raw_terms": list(label.raw_terms),
                    }
                )
                + "\n"
            )


def load_labels(path: str | Path) -> list[DiagnosisLabel]:
    labels = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                labels.append(
                    DiagnosisLabel(
                        patient_id=rec["patient_id"],
                        condition=rec["condition"],
                        report_id=rec["report_id"],
                        raw_terms=tuple(rec.get("raw_terms", ())),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path} line {line_no}: {exc}") from exc
    return labels


def labels_by_patient(labels: Iterable[DiagnosisLabel]) -> dict[str, set[str]]:
    """Per-patient positive condition sets; patients absent are all-negative."""
    out: dict[str, set[str]] = {}
    for label in labels:
        out.setdefault(label.patient_id, set()).add(label.condition)
    return out


def load_aliases(path: str | Path) -> dict[str, str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise CorpusError(f"{path}: alias table must be a JSON object")
    return {str(k): str(v) for k, v in raw.items()}
