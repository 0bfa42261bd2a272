"""Two-step evidence retrieval per (report, query) and snippet formatting.

A gate prompt first asks whether evidence for the query exists in the
report; only on an affirmative parse is the extraction prompt issued. A
(report, query) pair therefore yields at most one snippet or nothing. The
raw-sentence fallback turns the last N sentences of the record into
snippets directly, bypassing the text-generation backend.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date as Date
from pathlib import Path
from typing import Sequence

from . import prompts
from .corpus import PatientTimeline, Report
from .errors import CorpusError, GatewayError
from .gateway import Backend, length_normalized_logprob, parse_binary, render

QUERY_KINDS = ("risk", "signs", "risk_factor")


@dataclass(frozen=True)
class Query:
    term: str
    kind: str

    def __post_init__(self) -> None:
        if not self.term:
            raise ValueError("query term must be non-empty")
        if self.kind not in QUERY_KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}")

    @property
    def kind_label(self) -> str:
        """Human-readable label used in model-facing formatting."""
        return "risk factor" if self.kind == "risk_factor" else "diagnosis"


@dataclass(frozen=True)
class EvidenceSnippet:
    """One retrieved snippet tied to a query, source report, and relative day.

    ``query`` is None for raw-sentence snippets. ``relative_day`` counts
    days from the timeline's anchor date (newest past report), so past
    evidence is always <= 0. ``confidence`` is the length-normalized token
    log-probability of the generation when the backend reports one.
    """

    query: Query | None
    report_id: str
    relative_day: int
    text: str
    confidence: float | None = None
    origin: str = "llm"

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("snippet text must be non-empty")
        if self.origin not in ("llm", "raw_sentence"):
            raise ValueError(f"unknown snippet origin {self.origin!r}")


def evidence_exists(report: Report, query: Query, gateway: Backend) -> bool:
    """Issue the gate prompt for the query kind and parse its binary answer."""
    prompt = render(prompts.GATE_BY_KIND[query.kind], report.text, query.term)
    return parse_binary(gateway.complete(prompt).text)


def _extract_evidence(report: Report, query: Query, gateway: Backend) -> tuple[str, float | None]:
    prompt = render(prompts.EXTRACT_BY_KIND[query.kind], report.text, query.term)
    completion = gateway.complete(prompt)
    text = completion.text.strip()
    if not text:
        raise GatewayError(
            f"extractor returned no text for report {report.report_id!r}, query {query.term!r}"
        )
    confidence = length_normalized_logprob(completion) if completion.token_logprobs else None
    return text, confidence


def get_evidence(report: Report, query: Query, gateway: Backend) -> str:
    """Issue the extraction prompt and return its trimmed completion text."""
    return _extract_evidence(report, query, gateway)[0]


def retrieve(
    report: Report,
    query: Query,
    gateway: Backend,
    anchor_date: Date | None = None,
) -> EvidenceSnippet | None:
    """Gate then extract; None when the gate is negative.

    An extraction failure after an affirmative gate is an error, not a
    null snippet.
    """
    if not evidence_exists(report, query, gateway):
        return None
    text, confidence = _extract_evidence(report, query, gateway)
    anchor = anchor_date if anchor_date is not None else report.date
    return EvidenceSnippet(
        query=query,
        report_id=report.report_id,
        relative_day=(report.date - anchor).days,
        text=text,
        confidence=confidence,
        origin="llm",
    )


def retrieve_all(
    past: Sequence[Report],
    queries: Sequence[Query],
    gateway: Backend,
    anchor_date: Date | None = None,
) -> list[EvidenceSnippet]:
    """Retrieve over every (report, query) pair in canonical order.

    Output order is (report position, query position) with negative gates
    omitted, independent of how the calls might be scheduled.
    """
    if not past:
        raise ValueError("past report list is empty")
    if anchor_date is None:
        anchor_date = max(r.date for r in past)
    snippets = []
    for report in past:
        for query in queries:
            try:
                snippet = retrieve(report, query, gateway, anchor_date=anchor_date)
            except GatewayError as exc:
                raise GatewayError(f"report {report.report_id!r}, query {query.term!r}: {exc}") from exc
            if snippet is not None:
                snippets.append(snippet)
    return snippets


def retrieve_for_timeline(
    timeline: PatientTimeline, queries: Sequence[Query], gateway: Backend
) -> list[EvidenceSnippet]:
    return retrieve_all(timeline.past, queries, gateway, anchor_date=timeline.anchor_date)


def format_for_model(snippet: EvidenceSnippet) -> str:
    """Render a snippet with its query and relative-day metadata.

    Raw-sentence snippets have no query and render without the query prefix.
    """
    if snippet.query is None:
        return f'"{snippet.text}" (day {snippet.relative_day})'
    return (
        f'{snippet.query.term} ({snippet.query.kind_label}): '
        f'"{snippet.text}" (day {snippet.relative_day})'
    )


_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+|\n+")


def split_sentences(text: str) -> list[str]:
    """Rule-based splitter: terminal punctuation and newlines end sentences.

    Every returned sentence is a verbatim substring of ``text``.
    """
    parts = _SENTENCE_BOUNDARY.split(text)
    return [p.strip() for p in parts if p and p.strip()]


def all_ehr_evidence(
    past: Sequence[Report],
    limit: int = 1000,
    anchor_date: Date | None = None,
) -> list[EvidenceSnippet]:
    """The raw-sentence fallback: the last ``limit`` sentences of the record.

    Sentences keep chronological order and become query-less snippets with
    origin ``raw_sentence``.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    if not past:
        raise ValueError("past report list is empty")
    if anchor_date is None:
        anchor_date = max(r.date for r in past)
    snippets = []
    for report in past:
        for sentence in split_sentences(report.text):
            snippets.append(
                EvidenceSnippet(
                    query=None,
                    report_id=report.report_id,
                    relative_day=(report.date - anchor_date).days,
                    text=sentence,
                    confidence=None,
                    origin="raw_sentence",
                )
            )
    return snippets[-limit:]


def all_ehr_for_timeline(timeline: PatientTimeline, limit: int = 1000) -> list[EvidenceSnippet]:
    return all_ehr_evidence(timeline.past, limit=limit, anchor_date=timeline.anchor_date)


def load_queries(path: str | Path) -> list[Query]:
    """Read a query set file: JSON list of {term, kind}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise CorpusError(f"{path}: query file must hold a JSON list")
    try:
        return [Query(term=q["term"], kind=q["kind"]) for q in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"{path}: bad query entry: {exc}") from exc


def default_queries_path() -> Path:
    return Path(__file__).parent / "data" / "default_queries.json"


def default_queries() -> list[Query]:
    """The built-in query set: the three diagnoses plus clinician risk factors."""
    return load_queries(default_queries_path())


def save_evidence(snippets_by_patient: dict[str, list[EvidenceSnippet]], path: str | Path) -> None:
    """Write retrieved evidence as JSON Lines, one snippet per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for patient_id, snippets in snippets_by_patient.items():
            for s in snippets:
                fh.write(
                    json.dumps(
                        {
                            "patient_id": patient_id,
                            "term": s.query.term if s.query else None,
                            "kind": s.query.kind if s.query else None,
                            "report_id": s.report_id,
                            "relative_day": s.relative_day,
                            "text": s.text,
                            "confidence": s.confidence,
                            "origin": s.origin,
                        }
                    )
                    + "\n"
                )


def load_evidence(path: str | Path) -> dict[str, list[EvidenceSnippet]]:
    """Read evidence JSON Lines back into per-patient snippet lists."""
    by_patient: dict[str, list[EvidenceSnippet]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                query = None
                if rec["term"] is not None:
                    query = Query(term=rec["term"], kind=rec["kind"])
                snippet = EvidenceSnippet(
                    query=query,
                    report_id=rec["report_id"],
                    relative_day=rec["relative_day"],
                    text=rec["text"],
                    confidence=rec.get("confidence"),
                    origin=rec.get("origin", "llm"),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path} line {line_no}: {exc}") from exc
            by_patient.setdefault(rec["patient_id"], []).append(snippet)
    return by_patient
