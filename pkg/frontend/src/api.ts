// Typed client for the /v1 annotation service API.

export type Likelihood = "unlikely" | "somewhat_likely" | "very_likely";
export type Usefulness = "not_relevant" | "weakly_correlated" | "useful" | "very_useful";
export type Variant = "llm_logodds" | "llm_confidence" | "allehr_logodds" | "auto";
export type Stage =
  | "reviewing"
  | "explicit_check"
  | "likelihoods"
  | "prediction_feedback"
  | "evidence_loop"
  | "final";

export interface PatientSummary {
  patient_id: string;
  report_count: number;
  total_reports: number;
}

export interface TimelineReport {
  report_id: string;
  date: string;
  report_type: string;
  text: string;
  relative_day: number;
}

export interface SessionView {
  session_id: string;
  annotator_id: string;
  patient_id: string;
  variant: Exclude<Variant, "auto">;
  stage: Stage;
  served: number;
  annotated: number;
  review_seconds: number | null;
}

export interface PredictionPayload {
  conditions: string[];
  probabilities: Record<string, number>;
  prior: Record<string, number>;
  relative_risk: Record<string, number>;
  evidence_count: number;
}

export interface VoteEntry {
  probability: number;
  log_odds: number;
}

export interface EvidencePayload {
  rank: number;
  text: string;
  query: string | null;
  kind: string | null;
  report_id: string;
  relative_day: number;
  origin: string;
  duplicate_of: number | null;
  votes: Record<string, VoteEntry>;
}

export interface EvidenceAnnotation {
  usefulness: Record<string, Usefulness>;
  intuitive?: boolean;
  seen_in_review?: boolean;
  hallucination?: "no" | "partial" | "yes";
  explanation?: string;
}

export interface PendingLabel {
  label_id: string;
  patient_id: string;
  condition: string;
  report_id: string;
  raw_terms: string[];
  report_text: string;
}

export interface AuditItem {
  audit_id: string;
  text: string;
  query: string | null;
  report_id: string;
  report_text: string;
  sessions: string[];
  verdict: { verdict: string; explanation: string | null } | null;
}

export type ChangedMind = Record<string, { old: Likelihood; new: Likelihood } | null>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = await response.json();
        if (payload && typeof payload.detail === "string") detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    const contentType = response.headers.get("content-type") ?? "";
    if (contentType.includes("application/json")) {
      return (await response.json()) as T;
    }
    return (await response.text()) as unknown as T;
  }

  listPatients(): Promise<PatientSummary[]> {
    return this.request("GET", "/v1/patients");
  }

  timeline(patientId: string, sessionId?: string): Promise<TimelineReport[]> {
    const query = sessionId ? `?session_id=${encodeURIComponent(sessionId)}` : "";
    return this.request("GET", `/v1/patients/${encodeURIComponent(patientId)}/timeline${query}`);
  }

  createSession(annotatorId: string, patientId: string, variant: Variant): Promise<SessionView> {
    return this.request("POST", "/v1/sessions", {
      annotator_id: annotatorId,
      patient_id: patientId,
      variant,
    });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/v1/sessions/${sessionId}`);
  }

  submitExplicit(sessionId: string, answers: Record<string, boolean>): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${sessionId}/explicit`, { answers });
  }

  submitLikelihoods(sessionId: string, answers: Record<string, Likelihood>): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${sessionId}/likelihoods`, { answers });
  }

  getPrediction(sessionId: string): Promise<PredictionPayload> {
    return this.request("GET", `/v1/sessions/${sessionId}/prediction`);
  }

  submitPredictionFeedback(sessionId: string, aligns: Record<string, boolean>): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${sessionId}/prediction_feedback`, { aligns });
  }

  nextEvidence(sessionId: string): Promise<EvidencePayload> {
    return this.request("GET", `/v1/sessions/${sessionId}/evidence/next`);
  }

  annotateEvidence(
    sessionId: string,
    rank: number,
    annotation: EvidenceAnnotation,
  ): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${sessionId}/evidence/${rank}`, annotation);
  }

  submitFinal(sessionId: string, changedMind: ChangedMind): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${sessionId}/final`, { changed_mind: changedMind });
  }

  pendingLabels(): Promise<PendingLabel[]> {
    return this.request("GET", "/v1/labels/pending");
  }

  submitLabelVerdict(
    labelId: string,
    confident: "yes" | "no",
    earlierLikely?: "yes" | "no",
  ): Promise<unknown> {
    return this.request("POST", `/v1/labels/${labelId}/verdict`, {
      confident,
      earlier_likely: earlierLikely ?? null,
    });
  }

  auditQueue(): Promise<AuditItem[]> {
    return this.request("GET", "/v1/audit/abstractive");
  }

  submitAuditVerdict(
    auditId: string,
    verdict: "no" | "partial" | "yes",
    explanation?: string,
  ): Promise<unknown> {
    return this.request("POST", `/v1/audit/${auditId}`, {
      verdict,
      explanation: explanation ?? null,
    });
  }

  async exportAnnotations(): Promise<Record<string, unknown>[]> {
    const text = await this.request<string>("GET", "/v1/export/annotations");
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line));
  }
}
