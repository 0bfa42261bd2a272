"""Patient-note corpora: loading, validation, splitting, and preprocessing.

The on-disk corpus format is JSON Lines, one report per line:

    {"patient_id": ..., "report_id": ..., "date": "YYYY-MM-DD",
     "report_type": ..., "text": ..., "admitting_diagnosis_span": [start, end]}

``admitting_diagnosis_span`` is optional and half-open. Reports are grouped
into per-patient timelines sorted by (date, report_id); the split index
separates the observed past from the future used for label extraction.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import CorpusError
from .stablehash import stable_randint, stable_uniform

SPLIT_NAMES = ("train", "validation", "test", "annotation")


@dataclass(frozen=True)
class Report:
    """One clinical note."""

    report_id: str
    patient_id: str
    date: Date
    report_type: str
    text: str
    admitting_diagnosis_span: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise CorpusError(f"report {self.report_id!r} has empty text")
        span = self.admitting_diagnosis_span
        if span is not None:
            start, end = span
            if not (0 <= start < end <= len(self.text)):
                raise CorpusError(
                    f"report {self.report_id!r}: admitting-diagnosis span {span} "
                    f"outside text bounds [0, {len(self.text)})"
                )


@dataclass(frozen=True)
class PatientTimeline:
    """Date-ordered reports for one patient with a past/future boundary.

    ``reports[:split_index]`` is the past, ``reports[split_index:]`` the
    future. The split index defaults to the full length (no future), so a
    freshly loaded timeline exposes the whole record as past.
    """

    patient_id: str
    reports: tuple[Report, ...]
    split_index: int = -1

    def __post_init__(self) -> None:
        if not self.reports:
            raise CorpusError(f"patient {self.patient_id!r} has no reports")
        keys = [(r.date, r.report_id) for r in self.reports]
        if keys != sorted(keys) or len(set(keys)) != len(keys):
            raise CorpusError(f"patient {self.patient_id!r}: reports not strictly (date, report_id) sorted")
        if self.split_index == -1:
            object.__setattr__(self, "split_index", len(self.reports))
        if not (1 <= self.split_index <= len(self.reports)):
            raise CorpusError(
                f"patient {self.patient_id!r}: split_index {self.split_index} "
                f"outside [1, {len(self.reports)}]"
            )

    @property
    def past(self) -> tuple[Report, ...]:
        return self.reports[: self.split_index]

    @property
    def future(self) -> tuple[Report, ...]:
        return self.reports[self.split_index :]

    @property
    def anchor_date(self) -> Date:
        """Day 0 for relative dating: the date of the newest past report."""
        return self.reports[self.split_index - 1].date


@dataclass(frozen=True)
class CorpusSplit:
    name: str
    patient_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.name not in SPLIT_NAMES:
            raise CorpusError(f"unknown split name {self.name!r}")


@dataclass
class Corpus:
    """Immutable collection of patient timelines, in first-seen order."""

    patients: list[PatientTimeline]
    _by_id: dict[str, PatientTimeline] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._by_id = {p.patient_id: p for p in self.patients}
        if len(self._by_id) != len(self.patients):
            raise CorpusError("duplicate patient_id in corpus")

    def __len__(self) -> int:
        return len(self.patients)

    def __iter__(self) -> Iterator[PatientTimeline]:
        return iter(self.patients)

    def get(self, patient_id: str) -> PatientTimeline:
        try:
            return self._by_id[patient_id]
        except KeyError:
            raise CorpusError(f"unknown patient {patient_id!r}") from None

    def report(self, report_id: str) -> Report:
        for patient in self.patients:
            for r in patient.reports:
                if r.report_id == report_id:
                    return r
        raise CorpusError(f"unknown report {report_id!r}")

    def with_patients(self, patients: Iterable[PatientTimeline]) -> "Corpus":
        return Corpus(patients=list(patients))


def _parse_date(value: object, line_no: int) -> Date:
    if not isinstance(value, str):
        raise CorpusError(f"line {line_no}: date must be a 'YYYY-MM-DD' string, got {value!r}")
    try:
        return Date.fromisoformat(value)
    except ValueError as exc:
        raise CorpusError(f"line {line_no}: bad date {value!r}: {exc}") from exc


def load_corpus(path: str | Path) -> Corpus:
    """Read a JSON Lines corpus file, validating every record.

    Raises CorpusError with the offending line number on malformed records,
    on duplicate report ids, and on an empty corpus.
    """
    path = Path(path)
    seen_report_ids: set[str] = set()
    reports_by_patient: dict[str, list[Report]] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"line {line_no}: expected a JSON object")
            missing = [k for k in ("patient_id", "report_id", "date", "report_type", "text") if k not in record]
            if missing:
                raise CorpusError(f"line {line_no}: missing keys {missing}")
            report_id = record["report_id"]
            if report_id in seen_report_ids:
                raise CorpusError(f"line {line_no}: duplicate report_id {report_id!r}")
            seen_report_ids.add(report_id)
            span = record.get("admitting_diagnosis_span")
            try:
                report = Report(
                    report_id=report_id,
                    patient_id=record["patient_id"],
                    date=_parse_date(record["date"], line_no),
                    report_type=record["report_type"],
                    text=record["text"],
                    admitting_diagnosis_span=tuple(span) if span is not None else None,
                )
            except CorpusError as exc:
                raise CorpusError(f"line {line_no}: {exc}") from exc
            reports_by_patient.setdefault(report.patient_id, []).append(report)
    if not reports_by_patient:
        raise CorpusError(f"{path}: empty corpus")
    patients = [
        PatientTimeline(
            patient_id=pid,
            reports=tuple(sorted(reports, key=lambda r: (r.date, r.report_id))),
        )
        for pid, reports in reports_by_patient.items()
    ]
    return Corpus(patients=patients)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to JSON Lines in timeline order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for patient in corpus:
            for r in patient.reports:
                record: dict = {
                    "patient_id": r.patient_id,
                    "report_id": r.report_id,
                    "date": r.date.isoformat(),
                    "report_type": r.report_type,
                    "text": r.text,
                }
                if r.admitting_diagnosis_span is not None:
                    record["admitting_diagnosis_span"] = list(r.admitting_diagnosis_span)
                fh.write(json.dumps(record) + "\n")


def split_timeline(patient: PatientTimeline, seed: int) -> PatientTimeline:
    """Assign a past/future boundary, uniform over [1, n-1].

    Pure function of (seed, patient_id, report count): the same patient and
    seed always land on the same time-point.
    """
    n = len(patient.reports)
    if n < 2:
        raise CorpusError(f"patient {patient.patient_id!r} has fewer than 2 reports; cannot split")
    index = stable_randint(1, n - 1, "split", seed, patient.patient_id)
    return dataclasses.replace(patient, split_index=index)


def filter_long_records(corpus: Corpus, max_reports: int = 200) -> Corpus:
    """Drop patients with strictly more than ``max_reports`` reports."""
    if max_reports < 1:
        raise ValueError("max_reports must be >= 1")
    return corpus.with_patients(p for p in corpus if len(p.reports) <= max_reports)


def subsample_negatives(
    patients: Iterable[PatientTimeline],
    labels: Mapping[str, Iterable[str]],
    rate: float = 0.2,
    seed: int = 0,
) -> list[PatientTimeline]:
    """Keep every positive patient; keep all-negative patients with probability ``rate``.

    Retention of a negative is a deterministic function of (seed, patient_id),
    so the same call always returns the same subset.
    """
    if not (0 < rate <= 1):
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    kept = []
    for patient in patients:
        positive = bool(set(labels.get(patient.patient_id, ())))
        if positive or stable_uniform("subsample", seed, patient.patient_id) < rate:
            kept.append(patient)
    return kept


def strip_admitting_diagnosis(report: Report) -> Report:
    """Excise the admitting-diagnosis span, if any. Idempotent.

    A span covering the whole text is rejected: a report consisting of
    nothing but its admitting diagnosis has no usable content.
    """
    span = report.admitting_diagnosis_span
    if span is None:
        return report
    start, end = span
    remainder = report.text[:start] + report.text[end:]
    if not remainder:
        raise CorpusError(
            f"report {report.report_id!r}: admitting-diagnosis span covers the entire text"
        )
    return dataclasses.replace(report, text=remainder, admitting_diagnosis_span=None)


def load_splits(path: str | Path) -> dict[str, list[str]]:
    """Read a split file: JSON object mapping split name to patient id list."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise CorpusError(f"{path}: split file must be a JSON object")
    for name in raw:
        if name not in SPLIT_NAMES:
            raise CorpusError(f"{path}: unknown split name {name!r}")
    return {name: list(raw.get(name, [])) for name in SPLIT_NAMES}


def save_splits(splits: Mapping[str, Iterable[str]], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps({name: list(splits.get(name, [])) for name in SPLIT_NAMES}, indent=2) + "\n",
        encoding="utf-8",
    )


def make_splits(
    corpus: Corpus,
    fractions: tuple[float, float, float, float] = (0.7, 0.1, 0.1, 0.1),
    seed: int = 0,
) -> dict[str, list[str]]:
    """Partition patients into train/validation/test/annotation splits.

    Patients are ordered by a deterministic per-patient draw and cut at the
    cumulative fraction boundaries, so the partition is stable under seed.
    """
    if len(fractions) != len(SPLIT_NAMES):
        raise ValueError(f"expected {len(SPLIT_NAMES)} fractions")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
    ids = sorted((p.patient_id for p in corpus), key=lambda pid: stable_uniform("split-assign", seed, pid))
    n = len(ids)
    bounds = []
    acc = 0.0
    for f in fractions[:-1]:
        acc += f
        bounds.append(round(acc * n))
    cuts = [0, *bounds, n]
    return {name: ids[cuts[i] : cuts[i + 1]] for i, name in enumerate(SPLIT_NAMES)}


def validate_splits(corpus: Corpus, splits: Mapping[str, list[str]]) -> None:
    """Check that the four splits partition the corpus with no overlap."""
    all_ids = [pid for name in SPLIT_NAMES for pid in splits.get(name, [])]
    if len(all_ids) != len(set(all_ids)):
        raise CorpusError("splits overlap: a patient appears in more than one split")
    corpus_ids = {p.patient_id for p in corpus}
    extra = set(all_ids) - corpus_ids
    if extra:
        raise CorpusError(f"splits reference unknown patients: {sorted(extra)[:5]}")
    missing = corpus_ids - set(all_ids)
    if missing:
        raise CorpusError(f"patients missing from splits: {sorted(missing)[:5]}")
