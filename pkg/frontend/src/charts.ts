// Horizontal bar rendering for vote probabilities and log-odds.
//
// Values come straight from server payloads; nothing is recomputed here so
// the charts cannot drift from the model's own numbers.

import { VoteEntry } from "./api.js";

function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** 0..1 probability bar with the prior marked for comparison. */
export function probabilityBar(label: string, probability: number, prior?: number): string {
  const width = Math.max(0, Math.min(100, probability * 100));
  const priorMark =
    prior === undefined
      ? ""
      : `<span class="prior-mark" style="left:${Math.max(0, Math.min(100, prior * 100))}%" title="prior ${prior.toFixed(3)}"></span>`;
  return `
    <div class="bar-row">
      <span class="bar-label">${escapeHtml(label)}</span>
      <span class="bar-track">
        <span class="bar-fill prob" style="width:${width}%"></span>
        ${priorMark}
      </span>
      <span class="bar-value">${probability.toFixed(3)}</span>
    </div>`;
}

/** Signed log-odds bar: negative values extend left of the midline. */
export function logOddsBar(label: string, logOdds: number, scale = 4): string {
  const clipped = Math.max(-scale, Math.min(scale, logOdds));
  const half = Math.abs(clipped) / scale * 50;
  const side = clipped >= 0 ? `left:50%;width:${half}%` : `left:${50 - half}%;width:${half}%`;
  const sign = clipped >= 0 ? "pos" : "neg";
  return `
    <div class="bar-row">
      <span class="bar-label">${escapeHtml(label)}</span>
      <span class="bar-track midline">
        <span class="bar-fill ${sign}" style="${side}"></span>
      </span>
      <span class="bar-value">${logOdds >= 0 ? "+" : ""}${logOdds.toFixed(2)}</span>
    </div>`;
}

/** Per-evidence panel: predicted likelihood on top, odds shift below. */
export function voteCharts(votes: Record<string, VoteEntry>): string {
  const conditions = Object.keys(votes);
  const probabilities = conditions.map((c) => probabilityBar(c, votes[c].probability)).join("");
  const odds = conditions.map((c) => logOddsBar(c, votes[c].log_odds)).join("");
  return `
    <div class="vote-charts">
      <div class="chart-block"><h4>Predicted likelihood</h4>${probabilities}</div>
      <div class="chart-block"><h4>Log-odds shift</h4>${odds}</div>
    </div>`;
}
