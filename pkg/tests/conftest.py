from __future__ import annotations

from datetime import date, timedelta

import pytest

from evident.corpus import PatientTimeline, Report
from evident.gateway import FixtureRule, MockBackend


def make_report(
    report_id: str = "r0",
    patient_id: str = "p0",
    day: int = 0,
    text: str = "The patient is stable.",
    report_type: str = "nursing",
    span: tuple[int, int] | None = None,
) -> Report:
    return Report(
        report_id=report_id,
        patient_id=patient_id,
        date=date(2020, 1, 1) + timedelta(days=day),
        report_type=report_type,
        text=text,
        admitting_diagnosis_span=span,
    )


def make_timeline(patient_id: str = "p0", texts: list[str] | None = None, split_index: int = -1) -> PatientTimeline:
    texts = texts if texts is not None else ["note one.", "note two.", "note three."]
    reports = tuple(
        make_report(report_id=f"{patient_id}-r{i}", patient_id=patient_id, day=i, text=t)
        for i, t in enumerate(texts)
    )
    return PatientTimeline(patient_id=patient_id, reports=reports, split_index=split_index)


@pytest.fixture
def yes_backend() -> MockBackend:
    return MockBackend(default_response="Yes")


@pytest.fixture
def no_backend() -> MockBackend:
    return MockBackend(default_response="No")


def rule(pattern, response, match="substring_all", logprobs=None) -> FixtureRule:
    if isinstance(pattern, str):
        pattern = (pattern,)
    return FixtureRule(match=match, pattern=tuple(pattern), response=response, token_logprobs=logprobs)
