// In-memory mirror of the /v1 service contract for protocol tests.
//
// Stages, ordering guards, the ten-item evidence cap, label and audit
// verdicts, the event log, and NDJSON export all behave like the real
// service so flow tests exercise the same rules the browser would hit.

import type { FetchLike } from "../src/api.js";

export interface FakeEvidence {
  rank: number;
  text: string;
  query: string | null;
  kind: string | null;
  report_id: string;
  relative_day: number;
  origin: string;
  duplicate_of: number | null;
  votes: Record<string, { probability: number; log_odds: number }>;
}

interface FakeSession {
  session_id: string;
  annotator_id: string;
  patient_id: string;
  variant: string;
  stage: string;
  review_started: number | null;
  review_seconds: number | null;
  explicit: Record<string, boolean> | null;
  likelihoods: Record<string, string> | null;
  prediction_feedback: Record<string, boolean> | null;
  served: FakeEvidence[];
  annotations: Map<number, unknown>;
  changed_mind: unknown;
}

const LIKELIHOOD_LEVELS = ["unlikely", "somewhat_likely", "very_likely"];
const USEFULNESS_LEVELS = ["not_relevant", "weakly_correlated", "useful", "very_useful"];
const VARIANTS = ["llm_logodds", "llm_confidence", "allehr_logodds"];
const MAX_EVIDENCE = 10;

export class FakeServer {
  events: { type: string; session_id?: string; ts: number }[] = [];
  sessions = new Map<string, FakeSession>();
  labelVerdicts = new Map<string, unknown>();
  auditVerdicts = new Map<string, unknown>();
  now = 1000;
  private counter = 0;

  constructor(
    public readonly conditions: string[],
    public readonly patients: { patient_id: string; reports: { report_id: string; text: string }[] }[],
    public readonly evidenceByPatient: Record<string, FakeEvidence[]>,
    public readonly pendingLabels: {
      label_id: string;
      patient_id: string;
      condition: string;
      report_id: string;
      raw_terms: string[];
      report_text: string;
    }[] = [],
  ) {}

  tick(seconds: number): void {
    this.now += seconds;
  }

  private log(type: string, sessionId?: string): void {
    this.events.push({ type, session_id: sessionId, ts: this.now });
  }

  violations(): string[] {
    const done = new Set<string>();
    const out: string[] = [];
    for (const event of this.events) {
      if (event.type === "likelihoods_submitted") done.add(event.session_id ?? "");
      if (
        (event.type === "prediction_served" || event.type === "evidence_served") &&
        !done.has(event.session_id ?? "")
      ) {
        out.push(`${event.type} before likelihoods in ${event.session_id}`);
      }
    }
    return out;
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  }

  private error(status: number, detail: string): Response {
    return this.json(status, { detail });
  }

  private checkConditions(mapping: Record<string, unknown> | null | undefined): string | null {
    if (!mapping) return "missing answers";
    const keys = Object.keys(mapping).sort().join("|");
    const expected = [...this.conditions].sort().join("|");
    return keys === expected ? null : `answers must cover exactly the conditions`;
  }

  readonly fetch: FetchLike = async (input, init) => {
    const url = new URL(input, "http://fake");
    const path = url.pathname;
    const method = (init?.method ?? "GET").toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;

    if (method === "GET" && path === "/v1/patients") {
      return this.json(
        200,
        this.patients.map((p) => ({
          patient_id: p.patient_id,
          report_count: p.reports.length,
          total_reports: p.reports.length,
        })),
      );
    }

    const timelineMatch = path.match(/^\/v1\/patients\/([^/]+)\/timeline$/);
    if (method === "GET" && timelineMatch) {
      const patient = this.patients.find((p) => p.patient_id === decodeURIComponent(timelineMatch[1]));
      if (!patient) return this.error(404, "unknown annotation patient");
      const sessionId = url.searchParams.get("session_id");
      if (sessionId) {
        const session = this.sessions.get(sessionId);
        if (!session) return this.error(404, "unknown session");
        if (session.review_started === null) {
          session.review_started = this.now;
          this.log("timeline_viewed", sessionId);
        }
      }
      return this.json(
        200,
        patient.reports.map((r, i) => ({
          report_id: r.report_id,
          date: "2020-01-01",
          report_type: "nursing",
          text: r.text,
          relative_day: i - patient.reports.length + 1,
        })),
      );
    }

    if (method === "POST" && path === "/v1/sessions") {
      const { annotator_id, patient_id } = body;
      let variant = body.variant ?? "auto";
      if (!this.patients.some((p) => p.patient_id === patient_id)) {
        return this.error(404, "unknown annotation patient");
      }
      const existing = [...this.sessions.values()].filter((s) => s.patient_id === patient_id);
      if (variant === "auto") {
        const used = new Set(existing.map((s) => s.variant));
        const available = VARIANTS.filter((v) => !used.has(v));
        if (available.length === 0) return this.error(409, "all variants already assigned");
        variant = available[0];
      }
      if (existing.some((s) => s.variant === variant)) {
        return this.error(409, `variant ${variant} already assigned`);
      }
      if (existing.some((s) => s.annotator_id === annotator_id)) {
        return this.error(409, "annotator already has a session for this patient");
      }
      const session: FakeSession = {
        session_id: `s${this.counter++}`,
        annotator_id,
        patient_id,
        variant,
        stage: "reviewing",
        review_started: null,
        review_seconds: null,
        explicit: null,
        likelihoods: null,
        prediction_feedback: null,
        served: [],
        annotations: new Map(),
        changed_mind: null,
      };
      this.sessions.set(session.session_id, session);
      this.log("session_created", session.session_id);
      return this.json(201, this.view(session));
    }

    const sessionMatch = path.match(/^\/v1\/sessions\/([^/]+)(\/.*)?$/);
    if (sessionMatch) {
      const session = this.sessions.get(sessionMatch[1]);
      if (!session) return this.error(404, "unknown session");
      const tail = sessionMatch[2] ?? "";

      if (method === "GET" && tail === "") return this.json(200, this.view(session));

      if (method === "POST" && tail === "/explicit") {
        if (session.stage !== "reviewing" && session.stage !== "explicit_check") {
          return this.error(409, `explicit answers not accepted in stage ${session.stage}`);
        }
        const problem = this.checkConditions(body.answers);
        if (problem) return this.error(422, problem);
        session.explicit = body.answers;
        session.stage = Object.values(body.answers).some(Boolean) ? "final" : "likelihoods";
        this.log("explicit_submitted", session.session_id);
        return this.json(200, this.view(session));
      }

      if (method === "POST" && tail === "/likelihoods") {
        if (session.stage !== "likelihoods") {
          return this.error(409, `likelihoods not accepted in stage ${session.stage}`);
        }
        const problem = this.checkConditions(body.answers);
        if (problem) return this.error(422, problem);
        for (const value of Object.values(body.answers)) {
          if (!LIKELIHOOD_LEVELS.includes(value as string)) return this.error(422, "unknown likelihood");
        }
        session.likelihoods = body.answers;
        if (session.review_started !== null) {
          session.review_seconds = this.now - session.review_started;
        }
        session.stage = "prediction_feedback";
        this.log("likelihoods_submitted", session.session_id);
        return this.json(200, this.view(session));
      }

      if (method === "GET" && tail === "/prediction") {
        if (session.stage === "reviewing" || session.stage === "explicit_check" || session.stage === "likelihoods") {
          return this.error(409, "prediction is not available before likelihoods are submitted");
        }
        this.log("prediction_served", session.session_id);
        const constant = Object.fromEntries(this.conditions.map((c) => [c, 0.5]));
        return this.json(200, {
          conditions: this.conditions,
          probabilities: constant,
          prior: Object.fromEntries(this.conditions.map((c) => [c, 0.4])),
          relative_risk: Object.fromEntries(this.conditions.map((c) => [c, 1.25])),
          evidence_count: (this.evidenceByPatient[session.patient_id] ?? []).length,
        });
      }

      if (method === "POST" && tail === "/prediction_feedback") {
        if (session.stage !== "prediction_feedback") {
          return this.error(409, `prediction feedback not accepted in stage ${session.stage}`);
        }
        const problem = this.checkConditions(body.aligns);
        if (problem) return this.error(422, problem);
        session.prediction_feedback = body.aligns;
        session.stage = "evidence_loop";
        this.log("prediction_feedback_submitted", session.session_id);
        return this.json(200, this.view(session));
      }

      if (method === "GET" && tail === "/evidence/next") {
        if (session.stage !== "evidence_loop") {
          return this.error(409, `evidence is not available in stage ${session.stage}`);
        }
        if (session.served.length >= MAX_EVIDENCE) {
          return this.error(409, `maximum ${MAX_EVIDENCE} evidence items per session`);
        }
        if (session.served.length > 0 && session.annotations.size < session.served.length) {
          return this.error(409, "annotate the already-served evidence before requesting more");
        }
        const ranked = this.evidenceByPatient[session.patient_id] ?? [];
        if (session.served.length >= ranked.length) {
          return this.error(409, "no further evidence available for this patient");
        }
        const payload = ranked[session.served.length];
        session.served.push(payload);
        this.log("evidence_served", session.session_id);
        return this.json(200, payload);
      }

      const annotateMatch = tail.match(/^\/evidence\/(\d+)$/);
      if (method === "POST" && annotateMatch) {
        const rank = Number(annotateMatch[1]);
        if (session.stage !== "evidence_loop") {
          return this.error(409, `evidence annotation not accepted in stage ${session.stage}`);
        }
        if (!session.served.some((item) => item.rank === rank)) {
          return this.error(404, "evidence rank has not been served");
        }
        if (session.annotations.has(rank)) {
          return this.error(409, "evidence already annotated (append-only)");
        }
        const problem = this.checkConditions(body.usefulness);
        if (problem) return this.error(422, problem);
        for (const value of Object.values(body.usefulness)) {
          if (!USEFULNESS_LEVELS.includes(value as string)) return this.error(422, "unknown usefulness");
        }
        const useful = Object.values(body.usefulness).some(
          (v) => v === "useful" || v === "very_useful",
        );
        const hasFollowups = body.intuitive !== undefined || body.seen_in_review !== undefined;
        if (useful && (body.intuitive === undefined || body.seen_in_review === undefined)) {
          return this.error(422, "intuitive and seen_in_review are required for useful evidence");
        }
        if (!useful && hasFollowups) {
          return this.error(422, "intuitive/seen_in_review only apply to useful evidence");
        }
        session.annotations.set(rank, body);
        this.log("evidence_annotation_submitted", session.session_id);
        return this.json(200, this.view(session));
      }

      if (method === "POST" && tail === "/final") {
        if (session.stage !== "evidence_loop") {
          return this.error(409, `final answers not accepted in stage ${session.stage}`);
        }
        const problem = this.checkConditions(body.changed_mind);
        if (problem) return this.error(422, problem);
        session.changed_mind = body.changed_mind;
        session.stage = "final";
        this.log("final_submitted", session.session_id);
        return this.json(200, this.view(session));
      }
    }

    if (method === "GET" && path === "/v1/labels/pending") {
      return this.json(
        200,
        this.pendingLabels.filter((label) => !this.labelVerdicts.has(label.label_id)),
      );
    }

    const labelMatch = path.match(/^\/v1\/labels\/([^/]+)\/verdict$/);
    if (method === "POST" && labelMatch) {
      const labelId = labelMatch[1];
      if (!this.pendingLabels.some((label) => label.label_id === labelId)) {
        return this.error(404, "unknown label");
      }
      if (this.labelVerdicts.has(labelId)) return this.error(409, "label already has a verdict");
      if (body.confident === "yes" && body.earlier_likely !== "yes" && body.earlier_likely !== "no") {
        return this.error(422, "earlier_likely is required when the diagnosis is confident");
      }
      if (body.confident === "no" && body.earlier_likely) {
        return this.error(422, "earlier_likely only applies when the diagnosis is confident");
      }
      this.labelVerdicts.set(labelId, body);
      this.log("label_verdict_submitted");
      return this.json(200, { label_id: labelId, recorded: true });
    }

    if (method === "GET" && path === "/v1/audit/abstractive") {
      const queue = [];
      for (const session of this.sessions.values()) {
        for (const payload of session.served) {
          if (payload.origin !== "llm") continue;
          const report = this.patients
            .find((p) => p.patient_id === session.patient_id)
            ?.reports.find((r) => r.report_id === payload.report_id);
          const reportText = report?.text ?? "";
          if (reportText.toLowerCase().includes(payload.text.toLowerCase())) continue;
          const auditId = `a-${payload.report_id}-${payload.rank}`;
          queue.push({
            audit_id: auditId,
            text: payload.text,
            query: payload.query,
            report_id: payload.report_id,
            report_text: reportText,
            sessions: [session.session_id],
            verdict: this.auditVerdicts.get(auditId) ?? null,
          });
        }
      }
      return this.json(200, queue);
    }

    const auditMatch = path.match(/^\/v1\/audit\/([^/]+)$/);
    if (method === "POST" && auditMatch) {
      const auditId = auditMatch[1];
      if (this.auditVerdicts.has(auditId)) return this.error(409, "already has a verdict");
      if (body.verdict !== "no" && !body.explanation) {
        return this.error(422, "an explanation is required");
      }
      this.auditVerdicts.set(auditId, body);
      this.log("audit_verdict_submitted");
      return this.json(200, { audit_id: auditId, recorded: true });
    }

    if (method === "GET" && path === "/v1/export/annotations") {
      const lines: string[] = [];
      for (const session of [...this.sessions.values()].sort((a, b) =>
        a.session_id.localeCompare(b.session_id),
      )) {
        lines.push(
          JSON.stringify({
            kind: "session",
            session_id: session.session_id,
            annotator_id: session.annotator_id,
            patient_id: session.patient_id,
            model_variant: session.variant,
            stage: session.stage,
            review_seconds: session.review_seconds,
            report_count: this.patients.find((p) => p.patient_id === session.patient_id)?.reports.length ?? 0,
            explicit: session.explicit,
            likelihoods: session.likelihoods,
            prediction_feedback: session.prediction_feedback,
            evidence: session.served.map((payload) => ({
              ...payload,
              annotation: session.annotations.get(payload.rank) ?? null,
            })),
            changed_mind: session.changed_mind,
          }),
        );
      }
      for (const [labelId, verdict] of this.labelVerdicts) {
        lines.push(JSON.stringify({ kind: "label_verdict", label_id: labelId, ...(verdict as object) }));
      }
      for (const [auditId, verdict] of this.auditVerdicts) {
        lines.push(JSON.stringify({ kind: "audit_verdict", audit_id: auditId, ...(verdict as object) }));
      }
      return new Response(lines.join("\n") + "\n", {
        status: 200,
        headers: { "content-type": "application/x-ndjson" },
      });
    }

    return this.error(404, `no route for ${method} ${path}`);
  };

  private view(session: FakeSession) {
    return {
      session_id: session.session_id,
      annotator_id: session.annotator_id,
      patient_id: session.patient_id,
      variant: session.variant,
      stage: session.stage,
      served: session.served.length,
      annotated: session.annotations.size,
      review_seconds: session.review_seconds,
    };
  }
}

export function evidenceFixture(conditions: string[], count: number): FakeEvidence[] {
  return Array.from({ length: count }, (_, i) => ({
    rank: i + 1,
    text: `Planted finding number ${i + 1}.`,
    query: conditions[i % conditions.length],
    kind: "risk",
    report_id: `r${i % 3}`,
    relative_day: -i,
    origin: "llm",
    duplicate_of: null,
    votes: Object.fromEntries(
      conditions.map((c, j) => [c, { probability: 0.3 + 0.1 * ((i + j) % 5), log_odds: (i % 3) - 1 }]),
    ),
  }));
}
