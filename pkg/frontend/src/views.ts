// Screen renderers for the staged annotation flow.
//
// Each screen renders into the #screen container and wires its own
// listeners. Server 409s surface as an inline protocol banner; nothing is
// retried automatically.

import { ApiClient, ApiError, Likelihood, PatientSummary, Usefulness } from "./api.js";
import { probabilityBar, voteCharts } from "./charts.js";
import { needsFollowups, SessionFlow } from "./flow.js";

const LIKELIHOODS: Likelihood[] = ["unlikely", "somewhat_likely", "very_likely"];
const USEFULNESS: Usefulness[] = ["not_relevant", "weakly_correlated", "useful", "very_useful"];

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function screen(): HTMLElement {
  return el("screen");
}

function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function showProtocolMessage(message: string | null): void {
  const banner = el("protocol-banner");
  if (message) {
    banner.textContent = message;
    banner.classList.remove("hidden");
  } else {
    banner.textContent = "";
    banner.classList.add("hidden");
  }
}

function surface(error: unknown): void {
  if (error instanceof ApiError && error.status === 409) {
    showProtocolMessage(error.detail);
    return;
  }
  if (error instanceof ApiError) {
    showProtocolMessage(`${error.status}: ${error.detail}`);
    return;
  }
  showProtocolMessage(String(error));
}

function choiceRow(
  name: string,
  condition: string,
  options: readonly string[],
  checked?: string,
): string {
  const id = `${name}-${condition}`.replace(/\W+/g, "-");
  const buttons = options
    .map(
      (option) => `
      <label class="choice">
        <input type="radio" name="${id}" value="${option}" ${option === checked ? "checked" : ""}>
        ${option.replace(/_/g, " ")}
      </label>`,
    )
    .join("");
  return `<div class="choice-row" data-condition="${escapeHtml(condition)}" data-group="${id}">
    <span class="condition-name">${escapeHtml(condition)}</span>${buttons}
  </div>`;
}

function readChoices(container: HTMLElement): Record<string, string> | null {
  const answers: Record<string, string> = {};
  for (const row of container.querySelectorAll<HTMLElement>(".choice-row")) {
    const group = row.dataset.group ?? "";
    const selected = row.querySelector<HTMLInputElement>(`input[name="${group}"]:checked`);
    if (!selected) return null;
    answers[row.dataset.condition ?? ""] = selected.value;
  }
  return answers;
}

// ---- patient picker

export async function renderPatientList(
  client: ApiClient,
  flow: SessionFlow,
  onStarted: () => void,
): Promise<void> {
  const patients: PatientSummary[] = await client.listPatients();
  const rows = patients
    .map(
      (p) => `
      <tr>
        <td>${escapeHtml(p.patient_id)}</td>
        <td>${p.report_count}</td>
        <td><button class="start" data-patient="${escapeHtml(p.patient_id)}">annotate</button></td>
      </tr>`,
    )
    .join("");
  screen().innerHTML = `
    <h2>Patients</h2>
    <p>
      Annotator id: <input id="annotator-id" placeholder="annotator id" value="${escapeHtml(localStorage.getItem("annotator_id") ?? "")}">
      Variant:
      <select id="variant">
        <option value="auto">auto (balanced)</option>
        <option value="llm_logodds">llm_logodds</option>
        <option value="llm_confidence">llm_confidence</option>
        <option value="allehr_logodds">allehr_logodds</option>
      </select>
    </p>
    <table class="patients">
      <tr><th>patient</th><th>past reports</th><th></th></tr>
      ${rows}
    </table>`;
  for (const button of screen().querySelectorAll<HTMLButtonElement>("button.start")) {
    button.addEventListener("click", async () => {
      const annotator = (el("annotator-id") as HTMLInputElement).value.trim();
      if (!annotator) {
        showProtocolMessage("enter an annotator id first");
        return;
      }
      localStorage.setItem("annotator_id", annotator);
      const variant = (el("variant") as HTMLSelectElement).value as never;
      try {
        const session = await flow.start(annotator, button.dataset.patient ?? "", variant);
        sessionStorage.setItem("session_id", session.session_id);
        onStarted();
      } catch (error) {
        surface(error);
      }
    });
  }
}

// ---- record review

export async function renderReview(flow: SessionFlow, onDone: () => void): Promise<void> {
  const timeline = await flow.loadTimeline();
  const notes = timeline
    .map(
      (r) => `
      <article class="report">
        <header>${escapeHtml(r.report_id)} &middot; ${escapeHtml(r.report_type)} &middot; ${escapeHtml(r.date)} (day ${r.relative_day})</header>
        <pre>${escapeHtml(r.text)}</pre>
      </article>`,
    )
    .join("");
  screen().innerHTML = `
    <h2>Record review</h2>
    <p class="hint">Review quickly; aim for a few minutes. Elapsed: <span id="review-timer">0</span>s</p>
    <div class="notes-scroll">${notes}</div>
    <button id="done-reviewing">done reviewing</button>`;
  const timer = setInterval(() => {
    const node = document.getElementById("review-timer");
    if (!node) {
      clearInterval(timer);
      return;
    }
    node.textContent = String(Math.round(flow.reviewElapsedSeconds));
  }, 1000);
  el("done-reviewing").addEventListener("click", () => {
    clearInterval(timer);
    onDone();
  });
}

// ---- explicit diagnosis check

export function renderExplicit(flow: SessionFlow, onDone: (skipped: boolean) => void): void {
  const rows = flow.conditions.map((c) => choiceRow("explicit", c, ["yes", "no"])).join("");
  screen().innerHTML = `
    <h2>Explicit diagnosis check</h2>
    <p>Is the diagnosis already noted explicitly in the record?</p>
    ${rows}
    <button id="submit-explicit">submit</button>`;
  el("submit-explicit").addEventListener("click", async () => {
    const choices = readChoices(screen());
    if (!choices) {
      showProtocolMessage("answer every condition");
      return;
    }
    const answers = Object.fromEntries(Object.entries(choices).map(([c, v]) => [c, v === "yes"]));
    try {
      const session = await flow.submitExplicit(answers);
      onDone(session.stage === "final");
    } catch (error) {
      surface(error);
    }
  });
}

// ---- likelihood entry (before any model output)

export function renderLikelihoods(flow: SessionFlow, onDone: () => void): void {
  const rows = flow.conditions.map((c) => choiceRow("likelihood", c, LIKELIHOODS)).join("");
  screen().innerHTML = `
    <h2>Your risk estimates</h2>
    <p>Estimate each likelihood before any model output is shown.</p>
    ${rows}
    <button id="submit-likelihoods">submit</button>`;
  el("submit-likelihoods").addEventListener("click", async () => {
    const answers = readChoices(screen());
    if (!answers) {
      showProtocolMessage("answer every condition");
      return;
    }
    try {
      await flow.submitLikelihoods(answers as Record<string, Likelihood>);
      onDone();
    } catch (error) {
      surface(error);
    }
  });
}

// ---- prediction screen

export async function renderPrediction(flow: SessionFlow, onDone: () => void): Promise<void> {
  const prediction = await flow.fetchPrediction();
  const bars = prediction.conditions
    .map((c) => probabilityBar(c, prediction.probabilities[c], prediction.prior[c]))
    .join("");
  const rows = flow.conditions.map((c) => choiceRow("aligns", c, ["yes", "no"])).join("");
  screen().innerHTML = `
    <h2>Model risk estimates</h2>
    <p>Aggregated over ${prediction.evidence_count} evidence snippets; tick marks the prior.</p>
    ${bars}
    <h3>Does the predicted risk align with your intuition?</h3>
    ${rows}
    <button id="submit-feedback">continue to evidence</button>`;
  el("submit-feedback").addEventListener("click", async () => {
    const choices = readChoices(screen());
    if (!choices) {
      showProtocolMessage("answer every condition");
      return;
    }
    const aligns = Object.fromEntries(Object.entries(choices).map(([c, v]) => [c, v === "yes"]));
    try {
      await flow.submitPredictionFeedback(aligns);
      onDone();
    } catch (error) {
      surface(error);
    }
  });
}

// ---- evidence stepper

export async function renderEvidenceStep(flow: SessionFlow, onFinished: () => void): Promise<void> {
  let payload;
  try {
    payload = await flow.nextEvidence();
  } catch (error) {
    surface(error);
    renderFinal(flow, onFinished);
    return;
  }
  const usefulnessRows = flow.conditions.map((c) => choiceRow("useful", c, USEFULNESS)).join("");
  screen().innerHTML = `
    <h2>Evidence ${payload.rank} of at most 10</h2>
    <blockquote class="evidence-text">${escapeHtml(payload.text)}</blockquote>
    <p class="meta">
      query: ${escapeHtml(payload.query ?? "(raw sentence)")} &middot;
      report ${escapeHtml(payload.report_id)} &middot; day ${payload.relative_day}
      ${payload.duplicate_of ? `&middot; duplicate of #${payload.duplicate_of}` : ""}
    </p>
    ${voteCharts(payload.votes)}
    <h3>How useful is this evidence?</h3>
    ${usefulnessRows}
    <div id="followups" class="hidden">
      <h3>Because you marked it useful:</h3>
      ${choiceRow("intuitive", "impact aligns with intuition", ["yes", "no"])}
      ${choiceRow("seen", "seen during your review", ["yes", "no"])}
    </div>
    <button id="save-annotation">save annotation</button>`;

  const followups = el("followups");
  const updateFollowups = () => {
    const choices = readChoices(screen());
    const usefulnessOnly: Record<string, string> = {};
    for (const condition of flow.conditions) {
      const row = screen().querySelector<HTMLElement>(`[data-group="useful-${condition.replace(/\W+/g, "-")}"]`);
      const group = row?.dataset.group ?? "";
      const selected = row?.querySelector<HTMLInputElement>(`input[name="${group}"]:checked`);
      if (selected) usefulnessOnly[condition] = selected.value;
    }
    void choices;
    followups.classList.toggle("hidden", !needsFollowups(usefulnessOnly));
  };
  for (const input of screen().querySelectorAll("input[type=radio]")) {
    input.addEventListener("change", updateFollowups);
  }

  el("save-annotation").addEventListener("click", async () => {
    const usefulness: Record<string, Usefulness> = {};
    for (const condition of flow.conditions) {
      const row = screen().querySelector<HTMLElement>(`[data-group="useful-${condition.replace(/\W+/g, "-")}"]`);
      const group = row?.dataset.group ?? "";
      const selected = row?.querySelector<HTMLInputElement>(`input[name="${group}"]:checked`);
      if (!selected) {
        showProtocolMessage("rate usefulness for every condition");
        return;
      }
      usefulness[condition] = selected.value as Usefulness;
    }
    const annotation: Record<string, unknown> = { usefulness };
    if (needsFollowups(usefulness)) {
      const intuitiveRow = screen().querySelector<HTMLElement>('[data-group="intuitive-impact-aligns-with-intuition"]');
      const seenRow = screen().querySelector<HTMLElement>('[data-group="seen-seen-during-your-review"]');
      const intuitive = intuitiveRow?.querySelector<HTMLInputElement>("input:checked");
      const seen = seenRow?.querySelector<HTMLInputElement>("input:checked");
      if (!intuitive || !seen) {
        showProtocolMessage("useful evidence needs the intuition and seen-in-review answers");
        return;
      }
      annotation.intuitive = intuitive.value === "yes";
      annotation.seen_in_review = seen.value === "yes";
    }
    try {
      await flow.annotateEvidence(payload.rank, annotation as never);
    } catch (error) {
      surface(error);
      return;
    }
    renderEvidenceHub(flow, onFinished);
  });
}

/** Between evidence items: shows progress; request-more appears only after
 * two annotated items and disappears at the cap. */
export function renderEvidenceHub(flow: SessionFlow, onFinished: () => void): void {
  const served = flow.served.length;
  const annotated = flow.annotatedCount;
  const moreButton =
    flow.canRequestMore && !flow.atEvidenceCap
      ? '<button id="request-more">request more evidence</button>'
      : "";
  const nextButton =
    served < 2 || !flow.allServedAnnotated
      ? '<button id="next-evidence">next evidence</button>'
      : "";
  screen().innerHTML = `
    <h2>Evidence</h2>
    <p>${served} served, ${annotated} annotated.${flow.atEvidenceCap ? " Maximum of 10 reached." : ""}</p>
    ${served < 2 ? nextButton : moreButton}
    <button id="finish-session">finish session</button>`;
  const next = document.getElementById("next-evidence") ?? document.getElementById("request-more");
  if (next) {
    next.addEventListener("click", () => renderEvidenceStep(flow, onFinished));
  }
  el("finish-session").addEventListener("click", () => renderFinal(flow, onFinished));
}

// ---- final screen

export function renderFinal(flow: SessionFlow, onDone: () => void): void {
  const rows = flow.conditions
    .map(
      (c) => `
      <div class="changed-row" data-condition="${escapeHtml(c)}">
        <span class="condition-name">${escapeHtml(c)}</span>
        <label><input type="checkbox" class="changed-toggle"> changed my mind</label>
        <span class="changed-detail hidden">
          from <select class="old-likelihood">${LIKELIHOODS.map((l) => `<option>${l}</option>`).join("")}</select>
          to <select class="new-likelihood">${LIKELIHOODS.map((l) => `<option>${l}</option>`).join("")}</select>
        </span>
      </div>`,
    )
    .join("");
  screen().innerHTML = `
    <h2>Wrap up</h2>
    <p>Did any of the evidence change your original likelihood estimates?</p>
    ${rows}
    <button id="submit-final">submit session</button>`;
  for (const toggle of screen().querySelectorAll<HTMLInputElement>(".changed-toggle")) {
    toggle.addEventListener("change", () => {
      toggle.closest(".changed-row")?.querySelector(".changed-detail")?.classList.toggle("hidden", !toggle.checked);
    });
  }
  el("submit-final").addEventListener("click", async () => {
    const changed: Record<string, { old: Likelihood; new: Likelihood } | null> = {};
    for (const row of screen().querySelectorAll<HTMLElement>(".changed-row")) {
      const condition = row.dataset.condition ?? "";
      const toggled = row.querySelector<HTMLInputElement>(".changed-toggle")?.checked;
      if (toggled) {
        changed[condition] = {
          old: row.querySelector<HTMLSelectElement>(".old-likelihood")!.value as Likelihood,
          new: row.querySelector<HTMLSelectElement>(".new-likelihood")!.value as Likelihood,
        };
      } else {
        changed[condition] = null;
      }
    }
    try {
      await flow.submitFinal(changed);
      sessionStorage.removeItem("session_id");
      onDone();
    } catch (error) {
      surface(error);
    }
  });
}

// ---- label verification mode

export async function renderLabelVerification(client: ApiClient): Promise<void> {
  const pending = await client.pendingLabels();
  if (pending.length === 0) {
    screen().innerHTML = "<h2>Label verification</h2><p>No labels waiting for review.</p>";
    return;
  }
  const item = pending[0];
  screen().innerHTML = `
    <h2>Label verification (${pending.length} pending)</h2>
    <p>Extracted label: <strong>${escapeHtml(item.condition)}</strong>
       (terms: ${escapeHtml(item.raw_terms.join(", "))})</p>
    <article class="report"><header>${escapeHtml(item.report_id)}</header>
      <pre>${escapeHtml(item.report_text)}</pre></article>
    <h3>Is ${escapeHtml(item.condition)} a confident diagnosis of the patient according to the report?</h3>
    ${choiceRow("confident", "confident", ["yes", "no"])}
    <div id="earlier-block" class="hidden">
      <h3>Is it likely that this confident diagnosis could be identified in earlier reports?</h3>
      ${choiceRow("earlier", "earlier", ["yes", "no"])}
    </div>
    <button id="submit-verdict">submit verdict</button>`;
  const earlierBlock = el("earlier-block");
  for (const input of screen().querySelectorAll<HTMLInputElement>('[data-group="confident-confident"] input')) {
    input.addEventListener("change", () => {
      earlierBlock.classList.toggle("hidden", input.value !== "yes" || !input.checked);
    });
  }
  el("submit-verdict").addEventListener("click", async () => {
    const confident = screen().querySelector<HTMLInputElement>('[data-group="confident-confident"] input:checked');
    if (!confident) {
      showProtocolMessage("answer the confident-diagnosis question");
      return;
    }
    const earlier = screen().querySelector<HTMLInputElement>('[data-group="earlier-earlier"] input:checked');
    if (confident.value === "yes" && !earlier) {
      showProtocolMessage("the earlier-reports question is required for confident labels");
      return;
    }
    try {
      await client.submitLabelVerdict(
        item.label_id,
        confident.value as "yes" | "no",
        confident.value === "yes" ? (earlier!.value as "yes" | "no") : undefined,
      );
      renderLabelVerification(client);
    } catch (error) {
      surface(error);
    }
  });
}

// ---- hallucination audit mode

export async function renderAudit(client: ApiClient): Promise<void> {
  const queue = (await client.auditQueue()).filter((item) => item.verdict === null);
  if (queue.length === 0) {
    screen().innerHTML = "<h2>Hallucination audit</h2><p>No abstractive snippets awaiting audit.</p>";
    return;
  }
  const item = queue[0];
  screen().innerHTML = `
    <h2>Hallucination audit (${queue.length} pending)</h2>
    <div class="side-by-side">
      <div>
        <h3>Generated evidence</h3>
        <blockquote class="evidence-text">${escapeHtml(item.text)}</blockquote>
        <p class="meta">query: ${escapeHtml(item.query ?? "(none)")}</p>
      </div>
      <div>
        <h3>Source report ${escapeHtml(item.report_id)}</h3>
        <pre class="report-side">${escapeHtml(item.report_text)}</pre>
      </div>
    </div>
    <h3>Is the evidence hallucinated?</h3>
    ${choiceRow("hallucination", "verdict", ["no", "partial", "yes"])}
    <p><textarea id="explanation" placeholder="explanation (required unless 'no')"></textarea></p>
    <button id="submit-audit">submit verdict</button>`;
  el("submit-audit").addEventListener("click", async () => {
    const verdict = screen().querySelector<HTMLInputElement>('[data-group="hallucination-verdict"] input:checked');
    if (!verdict) {
      showProtocolMessage("choose a verdict");
      return;
    }
    const explanation = (el("explanation") as HTMLTextAreaElement).value.trim();
    if (verdict.value !== "no" && !explanation) {
      showProtocolMessage("an explanation is required for (partial) hallucinations");
      return;
    }
    try {
      await client.submitAuditVerdict(item.audit_id, verdict.value as never, explanation || undefined);
      renderAudit(client);
    } catch (error) {
      surface(error);
    }
  });
}
