// Entry point: mode switching and the staged session walk.

import { ApiClient } from "./api.js";
import { SessionFlow } from "./flow.js";
import {
  renderAudit,
  renderEvidenceHub,
  renderExplicit,
  renderFinal,
  renderLabelVerification,
  renderLikelihoods,
  renderPatientList,
  renderPrediction,
  renderReview,
  showProtocolMessage,
} from "./views.js";

const API_URL = (window as { EVIDENT_API_URL?: string }).EVIDENT_API_URL ?? "";
const CONDITIONS = (window as { EVIDENT_CONDITIONS?: string[] }).EVIDENT_CONDITIONS ?? [
  "cancer",
  "pneumonia",
  "pulmonary edema",
];

const client = new ApiClient(API_URL);
const flow = new SessionFlow(client, CONDITIONS);

function runSession(): void {
  showProtocolMessage(null);
  renderReview(flow, () => {
    renderExplicit(flow, (skipped) => {
      if (skipped) {
        // an explicit diagnosis ends the session immediately
        sessionStorage.removeItem("session_id");
        showProtocolMessage("diagnosis already explicit in the record; session closed");
        home();
        return;
      }
      renderLikelihoods(flow, () => {
        renderPrediction(flow, () => {
          renderEvidenceHub(flow, home);
        }).catch((error) => showProtocolMessage(String(error)));
      });
    });
  }).catch((error) => showProtocolMessage(String(error)));
}

function home(): void {
  renderPatientList(client, flow, runSession).catch((error) => showProtocolMessage(String(error)));
}

async function resumeOrHome(): Promise<void> {
  const saved = sessionStorage.getItem("session_id");
  if (!saved) {
    home();
    return;
  }
  try {
    const session = await flow.resume(saved);
    switch (session.stage) {
      case "reviewing":
      case "explicit_check":
        runSession();
        return;
      case "likelihoods":
        renderLikelihoods(flow, () => {
          renderPrediction(flow, () => renderEvidenceHub(flow, home)).catch((e) => showProtocolMessage(String(e)));
        });
        return;
      case "prediction_feedback":
        renderPrediction(flow, () => renderEvidenceHub(flow, home)).catch((e) => showProtocolMessage(String(e)));
        return;
      case "evidence_loop":
        renderEvidenceHub(flow, home);
        return;
      case "final":
        renderFinal(flow, home);
        return;
    }
  } catch {
    sessionStorage.removeItem("session_id");
    home();
  }
}

function wireModeButtons(): void {
  document.getElementById("mode-annotate")?.addEventListener("click", () => {
    showProtocolMessage(null);
    home();
  });
  document.getElementById("mode-labels")?.addEventListener("click", () => {
    showProtocolMessage(null);
    renderLabelVerification(client).catch((error) => showProtocolMessage(String(error)));
  });
  document.getElementById("mode-audit")?.addEventListener("click", () => {
    showProtocolMessage(null);
    renderAudit(client).catch((error) => showProtocolMessage(String(error)));
  });
}

wireModeButtons();
resumeOrHome();
