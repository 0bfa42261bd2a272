"""HTTP API over corpus, model, ranked evidence, and annotation sessions.

The annotation-ordering protocol is enforced server-side: a session must
answer the explicit-diagnosis check, then the three-way likelihoods, before
any prediction or evidence payload is serialized into a response. Evidence
is served one snippet at a time, each must be annotated before the next,
and no session sees more than ten. All state changes append to an event
log from which identical session state can be replayed.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Literal

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .corpus import Corpus, load_corpus, load_splits
from .embedder import Embedder, from_id
from .errors import EvidentError
from .evidence import EvidenceSnippet, all_ehr_for_timeline, format_for_model, load_evidence
from .labeler import DiagnosisLabel, load_labels
from .nam import RiskModel, load_model, predict as nam_predict, prior, vote
from .pipeline import split_all_timelines
from .ranker import RankedEvidence, mark_duplicates, rank
from .store import EventLog

STORE_DIR_ENV = "EVIDENT_STORE_DIR"
MODEL_PATH_ENV = "EVIDENT_MODEL_PATH"

VARIANTS = ("llm_logodds", "llm_confidence", "allehr_logodds")
STAGES = ("reviewing", "explicit_check", "likelihoods", "prediction_feedback", "evidence_loop", "final")
LIKELIHOOD_LEVELS = ("unlikely", "somewhat_likely", "very_likely")
USEFULNESS_LEVELS = ("not_relevant", "weakly_correlated", "useful", "very_useful")
MAX_EVIDENCE = 10
MAX_ANNOTATORS_PER_PATIENT = 3


class ServiceError(EvidentError):
    status_code = 422


class NotFound(ServiceError):
    status_code = 404


class StageViolation(ServiceError):
    status_code = 409


class ValidationFailure(ServiceError):
    status_code = 422


def _stage_index(stage: str) -> int:
    return STAGES.index(stage)


@dataclass
class Session:
    session_id: str
    annotator_id: str
    patient_id: str
    variant: str
    stage: str = "reviewing"
    review_started_ts: float | None = None
    review_seconds: float | None = None
    explicit: dict | None = None
    likelihoods: dict | None = None
    prediction_feedback: dict | None = None
    served: list[dict] = field(default_factory=list)
    annotations: dict[int, dict] = field(default_factory=dict)
    changed_mind: dict | None = None


@dataclass
class AnnotationEngine:
    """All session, verdict, and audit state plus the protocol rules."""

    corpus: Corpus
    annotation_ids: list[str]
    model: RiskModel
    embedder: Embedder
    evidence: dict[str, list[EvidenceSnippet]]
    labels: list[DiagnosisLabel]
    log: EventLog
    seed: int = 0
    all_ehr_limit: int = 1000

    def __post_init__(self) -> None:
        self.sessions: dict[str, Session] = {}
        self.label_verdicts: dict[str, dict] = {}
        self.audit_verdicts: dict[str, dict] = {}
        self._ranked_cache: dict[tuple[str, str], list[RankedEvidence]] = {}
        self._rng = random.Random(self.seed)
        self._lock = threading.RLock()
        self._label_index = {self._label_id(lb): lb for lb in self.labels}
        self.log.set_snapshot_provider(self._snapshot)
        for event in self.log.replay():
            self._apply(event, replaying=True)

    # ---- identifiers

    @staticmethod
    def _label_id(label: DiagnosisLabel) -> str:
        key = f"{label.patient_id}\x00{label.condition}\x00{label.report_id}"
        return hashlib.sha1(key.encode("utf-8")).hexdigest()[:12]

    @staticmethod
    def _audit_id(snippet_payload: dict) -> str:
        key = f"{snippet_payload['report_id']}\x00{snippet_payload.get('query')}\x00{snippet_payload['text']}"
        return hashlib.sha1(key.encode("utf-8")).hexdigest()[:12]

    # ---- ranked evidence per (patient, variant)

    def _ranked(self, patient_id: str, variant: str) -> list[RankedEvidence]:
        key = (patient_id, variant)
        if key not in self._ranked_cache:
            timeline = self.corpus.get(patient_id)
            if variant == "allehr_logodds":
                snippets = all_ehr_for_timeline(timeline, limit=self.all_ehr_limit)
                ranked = rank(snippets, "log_odds", model=self.model, embedder=self.embedder)
            elif variant == "llm_confidence":
                snippets = self.evidence.get(patient_id, [])
                ranked = rank(snippets, "confidence")
            else:
                snippets = self.evidence.get(patient_id, [])
                ranked = rank(snippets, "log_odds", model=self.model, embedder=self.embedder)
            self._ranked_cache[key] = mark_duplicates(ranked)
        return self._ranked_cache[key]

    def _evidence_payload(self, item: RankedEvidence) -> dict:
        s = item.snippet
        probs, log_odds = vote(self.model, self.embedder.embed(format_for_model(s)))
        return {
            "rank": item.rank,
            "text": s.text,
            "query": s.query.term if s.query else None,
            "kind": s.query.kind if s.query else None,
            "report_id": s.report_id,
            "relative_day": s.relative_day,
            "origin": s.origin,
            "duplicate_of": item.duplicate_of,
            "votes": {
                name: {"probability": float(p), "log_odds": float(lo)}
                for name, p, lo in zip(self.model.conditions, probs, log_odds)
            },
        }

    # ---- event application (single source of truth for state changes)

    def _apply(self, event: dict, replaying: bool = False) -> None:
        handler = getattr(self, f"_on_{event['type']}", None)
        if handler is None:
            raise EvidentError(f"unknown event type {event['type']!r}")
        handler(event)

    def _record(self, event_type: str, **payload) -> dict:
        event = self.log.append(event_type, **payload)
        self._apply(event)
        return event

    def _on_session_created(self, event: dict) -> None:
        s = Session(
            session_id=event["session_id"],
            annotator_id=event["annotator_id"],
            patient_id=event["patient_id"],
            variant=event["variant"],
        )
        self.sessions[s.session_id] = s

    def _on_timeline_viewed(self, event: dict) -> None:
        session = self.sessions.get(event.get("session_id", ""))
        if session is not None and session.review_started_ts is None:
            session.review_started_ts = event["ts"]
            if session.stage == "reviewing":
                session.stage = "explicit_check"

    def _on_explicit_submitted(self, event: dict) -> None:
        session = self.sessions[event["session_id"]]
        session.explicit = event["answers"]
        session.stage = "final" if any(event["answers"].values()) else "likelihoods"

    def _on_likelihoods_submitted(self, event: dict) -> None:
        session = self.sessions[event["session_id"]]
        session.likelihoods = event["answers"]
        if session.review_started_ts is not None:
            session.review_seconds = event["ts"] - session.review_started_ts
        session.stage = "prediction_feedback"

    def _on_prediction_served(self, event: dict) -> None:
        pass  # audit trail only

    def _on_prediction_feedback_submitted(self, event: dict) -> None:
        session = self.sessions[event["session_id"]]
        session.prediction_feedback = event["aligns"]
        session.stage = "evidence_loop"

    def _on_evidence_served(self, event: dict) -> None:
        session = self.sessions[event["session_id"]]
        session.served.append(event["payload"])

    def _on_evidence_annotation_submitted(self, event: dict) -> None:
        session = self.sessions[event["session_id"]]
        session.annotations[event["rank"]] = event["annotation"]

    def _on_final_submitted(self, event: dict) -> None:
        session = self.sessions[event["session_id"]]
        session.changed_mind = event["changed_mind"]
        session.stage = "final"

    def _on_label_verdict_submitted(self, event: dict) -> None:
        self.label_verdicts[event["label_id"]] = {
            "confident": event["confident"],
            "earlier_likely": event.get("earlier_likely"),
        }

    def _on_audit_verdict_submitted(self, event: dict) -> None:
        self.audit_verdicts[event["audit_id"]] = {
            "verdict": event["verdict"],
            "explanation": event.get("explanation"),
        }

    # ---- public operations (called by the API layer)

    def list_patients(self) -> list[dict]:
        out = []
        for pid in self.annotation_ids:
            timeline = self.corpus.get(pid)
            out.append(
                {
                    "patient_id": pid,
                    "report_count": len(timeline.past),
                    "total_reports": len(timeline.reports),
                }
            )
        return out

    def timeline(self, patient_id: str, session_id: str | None) -> list[dict]:
        with self._lock:
            if patient_id not in self.annotation_ids:
                raise NotFound(f"unknown annotation patient {patient_id!r}")
            timeline = self.corpus.get(patient_id)
            if session_id is not None:
                session = self._session(session_id)
                if session.patient_id != patient_id:
                    raise ValidationFailure("session does not belong to this patient")
                if session.review_started_ts is None:
                    self._record("timeline_viewed", session_id=session_id, patient_id=patient_id)
            anchor = timeline.anchor_date
            return [
                {
                    "report_id": r.report_id,
                    "date": r.date.isoformat(),
                    "report_type": r.report_type,
                    "text": r.text,
                    "relative_day": (r.date - anchor).days,
                }
                for r in timeline.past
            ]

    def _session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFound(f"unknown session {session_id!r}")
        return session

    def create_session(self, annotator_id: str, patient_id: str, variant: str) -> Session:
        with self._lock:
            if patient_id not in self.annotation_ids:
                raise NotFound(f"unknown annotation patient {patient_id!r}")
            if not annotator_id:
                raise ValidationFailure("annotator_id must be non-empty")
            existing = [s for s in self.sessions.values() if s.patient_id == patient_id]
            if variant == "auto":
                used = {s.variant for s in existing}
                available = [v for v in VARIANTS if v not in used]
                if not available:
                    raise StageViolation(f"all variants already assigned for patient {patient_id!r}")
                variant = self._rng.choice(available)
            if variant not in VARIANTS:
                raise ValidationFailure(f"unknown variant {variant!r}")
            if any(s.variant == variant for s in existing):
                raise StageViolation(f"variant {variant!r} already assigned for patient {patient_id!r}")
            if any(s.annotator_id == annotator_id for s in existing):
                raise StageViolation(f"annotator {annotator_id!r} already has a session for this patient")
            if len({s.annotator_id for s in existing}) >= MAX_ANNOTATORS_PER_PATIENT:
                raise StageViolation(f"patient {patient_id!r} already has {MAX_ANNOTATORS_PER_PATIENT} annotators")
            if variant in ("llm_logodds", "llm_confidence") and not self.evidence.get(patient_id):
                raise ValidationFailure(f"no retrieved evidence available for patient {patient_id!r}")
            if variant == "llm_confidence":
                missing = [
                    s.report_id for s in self.evidence.get(patient_id, []) if s.confidence is None
                ]
                if missing:
                    raise ValidationFailure(
                        "confidence variant unavailable: snippets lack token log-probabilities"
                    )
            session_id = uuid.uuid4().hex[:12]
            event = self._record(
                "session_created",
                session_id=session_id,
                annotator_id=annotator_id,
                patient_id=patient_id,
                variant=variant,
            )
            return self.sessions[event["session_id"]]

    def submit_explicit(self, session_id: str, answers: dict[str, bool]) -> Session:
        with self._lock:
            session = self._session(session_id)
            if session.stage not in ("reviewing", "explicit_check"):
                raise StageViolation(f"explicit answers not accepted in stage {session.stage!r}")
            self._check_conditions(answers)
            self._record("explicit_submitted", session_id=session_id, answers=answers)
            return session

    def submit_likelihoods(self, session_id: str, answers: dict[str, str]) -> Session:
        with self._lock:
            session = self._session(session_id)
            if session.stage != "likelihoods":
                raise StageViolation(f"likelihoods not accepted in stage {session.stage!r}")
            self._check_conditions(answers)
            for value in answers.values():
                if value not in LIKELIHOOD_LEVELS:
                    raise ValidationFailure(f"unknown likelihood {value!r}")
            self._record("likelihoods_submitted", session_id=session_id, answers=answers)
            return session

    def prediction(self, session_id: str) -> dict:
        with self._lock:
            session = self._session(session_id)
            if _stage_index(session.stage) < _stage_index("prediction_feedback"):
                raise StageViolation("prediction is not available before likelihoods are submitted")
            ranked = self._ranked(session.patient_id, session.variant)
            features = [self.embedder.embed(format_for_model(item.snippet)) for item in ranked]
            pred = nam_predict(self.model, features)
            base = prior(self.model)
            payload = {
                "conditions": list(self.model.conditions),
                "probabilities": {c: float(p) for c, p in zip(self.model.conditions, pred.probabilities)},
                "prior": {c: float(p) for c, p in zip(self.model.conditions, base)},
                "relative_risk": {c: float(r) for c, r in zip(self.model.conditions, pred.relative_risk)},
                "evidence_count": len(features),
            }
            self._record("prediction_served", session_id=session_id, payload=payload)
            return payload

    def submit_prediction_feedback(self, session_id: str, aligns: dict[str, bool]) -> Session:
        with self._lock:
            session = self._session(session_id)
            if session.stage != "prediction_feedback":
                raise StageViolation(f"prediction feedback not accepted in stage {session.stage!r}")
            self._check_conditions(aligns)
            self._record("prediction_feedback_submitted", session_id=session_id, aligns=aligns)
            return session

    def next_evidence(self, session_id: str) -> dict:
        with self._lock:
            session = self._session(session_id)
            if session.stage != "evidence_loop":
                raise StageViolation(f"evidence is not available in stage {session.stage!r}")
            served = len(session.served)
            if served >= MAX_EVIDENCE:
                raise StageViolation(f"maximum {MAX_EVIDENCE} evidence items per session")
            if served and len(session.annotations) < served:
                raise StageViolation("annotate the already-served evidence before requesting more")
            ranked = self._ranked(session.patient_id, session.variant)
            if served >= len(ranked):
                raise StageViolation("no further evidence available for this patient")
            payload = self._evidence_payload(ranked[served])
            self._record("evidence_served", session_id=session_id, payload=payload)
            return payload

    def annotate_evidence(self, session_id: str, rank_: int, annotation: dict) -> Session:
        with self._lock:
            session = self._session(session_id)
            if session.stage != "evidence_loop":
                raise StageViolation(f"evidence annotation not accepted in stage {session.stage!r}")
            if rank_ not in {item["rank"] for item in session.served}:
                raise NotFound(f"evidence rank {rank_} has not been served in this session")
            if rank_ in session.annotations:
                raise StageViolation(f"evidence rank {rank_} is already annotated (append-only)")
            usefulness = annotation.get("usefulness") or {}
            self._check_conditions(usefulness)
            for value in usefulness.values():
                if value not in USEFULNESS_LEVELS:
                    raise ValidationFailure(f"unknown usefulness {value!r}")
            useful = any(v in ("useful", "very_useful") for v in usefulness.values())
            has_followups = annotation.get("intuitive") is not None or annotation.get("seen_in_review") is not None
            if useful and (annotation.get("intuitive") is None or annotation.get("seen_in_review") is None):
                raise ValidationFailure("intuitive and seen_in_review are required for useful evidence")
            if not useful and has_followups:
                raise ValidationFailure("intuitive/seen_in_review only apply to useful evidence")
            hallucination = annotation.get("hallucination")
            if hallucination is not None and hallucination not in ("no", "partial", "yes"):
                raise ValidationFailure(f"unknown hallucination verdict {hallucination!r}")
            self._record(
                "evidence_annotation_submitted",
                session_id=session_id,
                rank=rank_,
                annotation=annotation,
            )
            return session

    def submit_final(self, session_id: str, changed_mind: dict) -> Session:
        with self._lock:
            session = self._session(session_id)
            if session.stage != "evidence_loop":
                raise StageViolation(f"final answers not accepted in stage {session.stage!r}")
            self._check_conditions(changed_mind)
            for value in changed_mind.values():
                if value is None:
                    continue
                if (
                    not isinstance(value, dict)
                    or value.get("old") not in LIKELIHOOD_LEVELS
                    or value.get("new") not in LIKELIHOOD_LEVELS
                ):
                    raise ValidationFailure("changed_mind entries need old/new likelihood levels or null")
            self._record("final_submitted", session_id=session_id, changed_mind=changed_mind)
            return session

    def _check_conditions(self, mapping: dict) -> None:
        expected = set(self.model.conditions)
        if set(mapping) != expected:
            raise ValidationFailure(f"answers must cover exactly the conditions {sorted(expected)}")

    # ---- label verification

    def pending_labels(self) -> list[dict]:
        out = []
        for label_id, label in self._label_index.items():
            if label_id in self.label_verdicts:
                continue
            out.append(
                {
                    "label_id": label_id,
                    "patient_id": label.patient_id,
                    "condition": label.condition,
                    "report_id": label.report_id,
                    "raw_terms": list(label.raw_terms),
                    "report_text": self.corpus.report(label.report_id).text,
                }
            )
        return out

    def submit_label_verdict(self, label_id: str, confident: str, earlier_likely: str | None) -> None:
        with self._lock:
            if label_id not in self._label_index:
                raise NotFound(f"unknown label {label_id!r}")
            if label_id in self.label_verdicts:
                raise StageViolation(f"label {label_id!r} already has a verdict (append-only)")
            if confident not in ("yes", "no"):
                raise ValidationFailure("confident must be 'yes' or 'no'")
            if confident == "yes" and earlier_likely not in ("yes", "no"):
                raise ValidationFailure("earlier_likely is required when the diagnosis is confident")
            if confident == "no" and earlier_likely is not None:
                raise ValidationFailure("earlier_likely only applies when the diagnosis is confident")
            self._record(
                "label_verdict_submitted",
                label_id=label_id,
                confident=confident,
                earlier_likely=earlier_likely,
            )

    # ---- hallucination audit

    def abstractive_queue(self) -> list[dict]:
        """Served llm-origin snippets whose text is not in the source report."""
        seen: dict[str, dict] = {}
        for session in self.sessions.values():
            for payload in session.served:
                if payload.get("origin") != "llm":
                    continue
                report_text = self.corpus.report(payload["report_id"]).text
                if _normalized(payload["text"]) in _normalized(report_text):
                    continue
                audit_id = self._audit_id(payload)
                entry = seen.setdefault(
                    audit_id,
                    {
                        "audit_id": audit_id,
                        "text": payload["text"],
                        "query": payload.get("query"),
                        "report_id": payload["report_id"],
                        "report_text": report_text,
                        "sessions": [],
                        "verdict": self.audit_verdicts.get(audit_id),
                    },
                )
                entry["sessions"].append(session.session_id)
        return list(seen.values())

    def submit_audit_verdict(self, audit_id: str, verdict: str, explanation: str | None) -> None:
        with self._lock:
            queue_ids = {item["audit_id"] for item in self.abstractive_queue()}
            if audit_id not in queue_ids:
                raise NotFound(f"unknown audit item {audit_id!r}")
            if audit_id in self.audit_verdicts:
                raise StageViolation(f"audit item {audit_id!r} already has a verdict (append-only)")
            if verdict not in ("no", "partial", "yes"):
                raise ValidationFailure("verdict must be one of no/partial/yes")
            if verdict != "no" and not explanation:
                raise ValidationFailure("an explanation is required for (partial) hallucinations")
            self._record(
                "audit_verdict_submitted",
                audit_id=audit_id,
                verdict=verdict,
                explanation=explanation,
            )

    # ---- export / snapshot

    def export_session(self, session: Session) -> dict:
        evidence = []
        for payload in session.served:
            entry = dict(payload)
            entry["annotation"] = session.annotations.get(payload["rank"])
            evidence.append(entry)
        return {
            "kind": "session",
            "session_id": session.session_id,
            "annotator_id": session.annotator_id,
            "patient_id": session.patient_id,
            "model_variant": session.variant,
            "stage": session.stage,
            "review_seconds": session.review_seconds,
            "report_count": len(self.corpus.get(session.patient_id).past),
            "explicit": session.explicit,
            "likelihoods": session.likelihoods,
            "prediction_feedback": session.prediction_feedback,
            "evidence": evidence,
            "changed_mind": session.changed_mind,
        }

    def export_lines(self) -> list[str]:
        lines = []
        for session_id in sorted(self.sessions):
            lines.append(json.dumps(self.export_session(self.sessions[session_id])))
        for label_id in sorted(self.label_verdicts):
            verdict = self.label_verdicts[label_id]
            label = self._label_index[label_id]
            lines.append(
                json.dumps(
                    {
                        "kind": "label_verdict",
                        "label_id": label_id,
                        "patient_id": label.patient_id,
                        "condition": label.condition,
                        "report_id": label.report_id,
                        **verdict,
                    }
                )
            )
        for audit_id in sorted(self.audit_verdicts):
            lines.append(json.dumps({"kind": "audit_verdict", "audit_id": audit_id, **self.audit_verdicts[audit_id]}))
        return lines

    def _snapshot(self) -> dict:
        return {
            "sessions": {sid: self.export_session(s) for sid, s in self.sessions.items()},
            "label_verdicts": self.label_verdicts,
            "audit_verdicts": self.audit_verdicts,
        }


def _normalized(text: str) -> str:
    return " ".join(text.lower().split())


# ---- request payload models


class SessionRequest(BaseModel):
    annotator_id: str
    patient_id: str
    variant: Literal["llm_logodds", "llm_confidence", "allehr_logodds", "auto"] = "auto"


class ExplicitRequest(BaseModel):
    answers: dict[str, bool]


class LikelihoodsRequest(BaseModel):
    answers: dict[str, str]


class PredictionFeedbackRequest(BaseModel):
    aligns: dict[str, bool]


class EvidenceAnnotationRequest(BaseModel):
    usefulness: dict[str, str]
    intuitive: bool | None = None
    seen_in_review: bool | None = None
    hallucination: Literal["no", "partial", "yes"] | None = None
    explanation: str | None = None


class FinalRequest(BaseModel):
    changed_mind: dict[str, dict | None]


class LabelVerdictRequest(BaseModel):
    confident: Literal["yes", "no"]
    earlier_likely: Literal["yes", "no"] | None = None


class AuditVerdictRequest(BaseModel):
    verdict: Literal["no", "partial", "yes"]
    explanation: str | None = None


@dataclass
class ServiceConfig:
    corpus_path: str
    splits_path: str
    model_path: str
    evidence_path: str | None = None
    labels_path: str | None = None
    store_dir: str | None = None
    split_seed: int = 0
    seed: int = 0


def build_engine(config: ServiceConfig, clock: Callable[[], float] = time.time) -> AnnotationEngine:
    corpus = load_corpus(config.corpus_path)
    splits = load_splits(config.splits_path)
    corpus = split_all_timelines(corpus, config.split_seed)
    model, _ = load_model(config.model_path)
    embedder = from_id(model.embedder_id)
    evidence = load_evidence(config.evidence_path) if config.evidence_path else {}
    labels = load_labels(config.labels_path) if config.labels_path else []
    store_dir = config.store_dir or os.environ.get(STORE_DIR_ENV) or "evident-store"
    log = EventLog(store_dir, clock=clock)
    annotation_ids = [pid for pid in splits.get("annotation", []) if any(p.patient_id == pid for p in corpus)]
    return AnnotationEngine(
        corpus=corpus,
        annotation_ids=annotation_ids,
        model=model,
        embedder=embedder,
        evidence=evidence,
        labels=labels,
        log=log,
        seed=config.seed,
    )


def create_app(engine: AnnotationEngine) -> FastAPI:
    app = FastAPI(title="evident annotation service", version="1")
    app.state.engine = engine

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status_code, content={"detail": str(exc)})

    def session_view(session: Session) -> dict:
        return {
            "session_id": session.session_id,
            "annotator_id": session.annotator_id,
            "patient_id": session.patient_id,
            "variant": session.variant,
            "stage": session.stage,
            "served": len(session.served),
            "annotated": len(session.annotations),
            "review_seconds": session.review_seconds,
        }

    @app.get("/v1/patients")
    def patients():
        return engine.list_patients()

    @app.get("/v1/patients/{patient_id}/timeline")
    def timeline(patient_id: str, until: str = "split", session_id: str | None = None):
        if until != "split":
            raise ValidationFailure("only until=split is supported")
        return engine.timeline(patient_id, session_id)

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: SessionRequest):
        return session_view(engine.create_session(body.annotator_id, body.patient_id, body.variant))

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return session_view(engine._session(session_id))

    @app.post("/v1/sessions/{session_id}/explicit")
    def explicit(session_id: str, body: ExplicitRequest):
        return session_view(engine.submit_explicit(session_id, body.answers))

    @app.post("/v1/sessions/{session_id}/likelihoods")
    def likelihoods(session_id: str, body: LikelihoodsRequest):
        return session_view(engine.submit_likelihoods(session_id, body.answers))

    @app.get("/v1/sessions/{session_id}/prediction")
    def prediction(session_id: str):
        return engine.prediction(session_id)

    @app.post("/v1/sessions/{session_id}/prediction_feedback")
    def prediction_feedback(session_id: str, body: PredictionFeedbackRequest):
        return session_view(engine.submit_prediction_feedback(session_id, body.aligns))

    @app.get("/v1/sessions/{session_id}/evidence/next")
    def next_evidence(session_id: str):
        return engine.next_evidence(session_id)

    @app.post("/v1/sessions/{session_id}/evidence/{rank}")
    def annotate_evidence(session_id: str, rank: int, body: EvidenceAnnotationRequest):
        annotation = {"usefulness": body.usefulness}
        if body.intuitive is not None:
            annotation["intuitive"] = body.intuitive
        if body.seen_in_review is not None:
            annotation["seen_in_review"] = body.seen_in_review
        if body.hallucination is not None:
            annotation["hallucination"] = body.hallucination
            annotation["explanation"] = body.explanation
        return session_view(engine.annotate_evidence(session_id, rank, annotation))

    @app.post("/v1/sessions/{session_id}/final")
    def final(session_id: str, body: FinalRequest):
        return session_view(engine.submit_final(session_id, body.changed_mind))

    @app.get("/v1/labels/pending")
    def labels_pending():
        return engine.pending_labels()

    @app.post("/v1/labels/{label_id}/verdict")
    def label_verdict(label_id: str, body: LabelVerdictRequest):
        engine.submit_label_verdict(label_id, body.confident, body.earlier_likely)
        return {"label_id": label_id, "recorded": True}

    @app.get("/v1/audit/abstractive")
    def audit_queue():
        return engine.abstractive_queue()

    @app.post("/v1/audit/{audit_id}")
    def audit_verdict(audit_id: str, body: AuditVerdictRequest):
        engine.submit_audit_verdict(audit_id, body.verdict, body.explanation)
        return {"audit_id": audit_id, "recorded": True}

    @app.get("/v1/export/annotations")
    def export():
        return PlainTextResponse("\n".join(engine.export_lines()) + "\n", media_type="application/x-ndjson")

    return app


def create_app_from_config(config: ServiceConfig) -> FastAPI:
    return create_app(build_engine(config))
