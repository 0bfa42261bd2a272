// Session flow controller: owns the staged protocol on the client side.
//
// The server is the arbiter; this controller repeats the ordering rules so
// the UI can disable controls before a request is even attempted, and it
// surfaces any 409 it still receives as an inline protocol message rather
// than retrying.

import {
  ApiClient,
  ApiError,
  ChangedMind,
  EvidenceAnnotation,
  EvidencePayload,
  Likelihood,
  PredictionPayload,
  SessionView,
  Stage,
  TimelineReport,
  Variant,
} from "./api.js";

export const MAX_EVIDENCE = 10;
export const MIN_BEFORE_REQUEST_MORE = 2;

const STAGE_ORDER: Stage[] = [
  "reviewing",
  "explicit_check",
  "likelihoods",
  "prediction_feedback",
  "evidence_loop",
  "final",
];

export function stageAtLeast(stage: Stage, other: Stage): boolean {
  return STAGE_ORDER.indexOf(stage) >= STAGE_ORDER.indexOf(other);
}

export interface ServedEvidence {
  payload: EvidencePayload;
  annotation: EvidenceAnnotation | null;
}

export class ProtocolMessage {
  constructor(public readonly text: string) {}
}

export class SessionFlow {
  session: SessionView | null = null;
  timeline: TimelineReport[] = [];
  prediction: PredictionPayload | null = null;
  served: ServedEvidence[] = [];
  reviewStartedAt: number | null = null;
  lastProtocolMessage: string | null = null;

  constructor(
    private readonly client: ApiClient,
    readonly conditions: string[],
  ) {}

  get stage(): Stage {
    return this.session ? this.session.stage : "reviewing";
  }

  get sessionId(): string {
    if (!this.session) throw new Error("no active session");
    return this.session.session_id;
  }

  // Prediction and evidence panels stay locked until the likelihood stage
  // completed; the server enforces the same rule.
  get canViewPrediction(): boolean {
    return this.session !== null && stageAtLeast(this.stage, "prediction_feedback");
  }

  get canViewEvidence(): boolean {
    return this.session !== null && this.stage === "evidence_loop";
  }

  get annotatedCount(): number {
    return this.served.filter((item) => item.annotation !== null).length;
  }

  get allServedAnnotated(): boolean {
    return this.served.every((item) => item.annotation !== null);
  }

  /** The stepper serves the first two items itself; afterwards more evidence
   * is an explicit request, available only with everything annotated and
   * under the ten-item cap. */
  get canRequestMore(): boolean {
    return (
      this.canViewEvidence &&
      this.served.length < MAX_EVIDENCE &&
      this.served.length >= MIN_BEFORE_REQUEST_MORE &&
      this.allServedAnnotated
    );
  }

  get atEvidenceCap(): boolean {
    return this.served.length >= MAX_EVIDENCE;
  }

  private async guarded<T>(operation: () => Promise<T>): Promise<T> {
    try {
      const result = await operation();
      this.lastProtocolMessage = null;
      return result;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.lastProtocolMessage = error.detail;
      }
      throw error;
    }
  }

  async start(annotatorId: string, patientId: string, variant: Variant): Promise<SessionView> {
    this.session = await this.guarded(() => this.client.createSession(annotatorId, patientId, variant));
    this.served = [];
    this.prediction = null;
    this.timeline = [];
    return this.session;
  }

  async resume(sessionId: string): Promise<SessionView> {
    this.session = await this.client.getSession(sessionId);
    return this.session;
  }

  async loadTimeline(): Promise<TimelineReport[]> {
    const session = this.session;
    if (!session) throw new Error("no active session");
    this.timeline = await this.client.timeline(session.patient_id, session.session_id);
    if (this.reviewStartedAt === null) this.reviewStartedAt = Date.now();
    return this.timeline;
  }

  /** Informational only; the authoritative review time is server-side. */
  get reviewElapsedSeconds(): number {
    return this.reviewStartedAt === null ? 0 : (Date.now() - this.reviewStartedAt) / 1000;
  }

  async submitExplicit(answers: Record<string, boolean>): Promise<SessionView> {
    this.session = await this.guarded(() => this.client.submitExplicit(this.sessionId, answers));
    return this.session;
  }

  async submitLikelihoods(answers: Record<string, Likelihood>): Promise<SessionView> {
    this.session = await this.guarded(() => this.client.submitLikelihoods(this.sessionId, answers));
    return this.session;
  }

  async fetchPrediction(): Promise<PredictionPayload> {
    if (!this.canViewPrediction) {
      throw new ProtocolMessageError("likelihood answers are required before predictions are shown");
    }
    this.prediction = await this.guarded(() => this.client.getPrediction(this.sessionId));
    return this.prediction;
  }

  async submitPredictionFeedback(aligns: Record<string, boolean>): Promise<SessionView> {
    this.session = await this.guarded(() => this.client.submitPredictionFeedback(this.sessionId, aligns));
    return this.session;
  }

  async nextEvidence(): Promise<EvidencePayload> {
    if (this.atEvidenceCap) {
      throw new ProtocolMessageError(`a session shows at most ${MAX_EVIDENCE} evidence items`);
    }
    const payload = await this.guarded(() => this.client.nextEvidence(this.sessionId));
    this.served.push({ payload, annotation: null });
    return payload;
  }

  async annotateEvidence(rank: number, annotation: EvidenceAnnotation): Promise<SessionView> {
    this.session = await this.guarded(() => this.client.annotateEvidence(this.sessionId, rank, annotation));
    const entry = this.served.find((item) => item.payload.rank === rank);
    if (entry) entry.annotation = annotation;
    return this.session;
  }

  async submitFinal(changedMind: ChangedMind): Promise<SessionView> {
    this.session = await this.guarded(() => this.client.submitFinal(this.sessionId, changedMind));
    return this.session;
  }
}

export class ProtocolMessageError extends Error {}

/** Follow-up questions apply only when some condition was rated useful. */
export function needsFollowups(usefulness: Record<string, string>): boolean {
  return Object.values(usefulness).some((level) => level === "useful" || level === "very_useful");
}
