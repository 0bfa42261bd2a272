"""Evidence ordering by log-odds deviation and the ablation strategies.

The primary score is the mean over conditions of the squared log-odds
vote: evidence that is strongly opinionated about one condition outranks
evidence mildly opinionated about many, and the score is invariant to any
bias recalibration because it contains no bias term.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embedder import Embedder
from .evidence import EvidenceSnippet, format_for_model
from .nam import RiskModel

STRATEGIES = ("log_odds", "confidence", "reverse_chronological", "random")


@dataclass(frozen=True)
class RankedEvidence:
    snippet: EvidenceSnippet
    score: float
    strategy: str
    rank: int  # 1-based
    duplicate_of: int | None = None


def mse_score(model: RiskModel, feature: np.ndarray) -> float:
    """Mean over conditions of the squared log-odds vote for one feature."""
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (model.d,):
        raise ValueError(f"feature must be ({model.d},), got {f.shape}")
    votes = model.weights @ f
    return float(np.mean(votes * votes))


def _tiebreak(snippet: EvidenceSnippet) -> tuple:
    term = snippet.query.term if snippet.query else ""
    return (-snippet.relative_day, snippet.report_id, term)


def rank(
    snippets: Sequence[EvidenceSnippet],
    strategy: str,
    model: RiskModel | None = None,
    embedder: Embedder | None = None,
    features: Sequence[np.ndarray] | None = None,
    seed: int | None = None,
) -> list[RankedEvidence]:
    """Order snippets by the chosen strategy with deterministic tie-breaking.

    log_odds needs a model plus either precomputed features (aligned with
    the snippets) or an embedder to featurize their model-facing rendering;
    confidence needs every snippet to carry a confidence value; random
    needs a seed. Ties always break by (recency, report_id, query term).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    scores: list[float]
    if strategy == "log_odds":
        if model is None:
            raise ValueError("log_odds ranking requires a model")
        if features is None:
            if embedder is None:
                raise ValueError("log_odds ranking requires features or an embedder")
            features = [embedder.embed(format_for_model(s)) for s in snippets]
        if len(features) != len(snippets):
            raise ValueError("features must align with snippets")
        scores = [mse_score(model, f) for f in features]
    elif strategy == "confidence":
        missing = [s.report_id for s in snippets if s.confidence is None]
        if missing:
            raise ValueError(
                "confidence ranking requires token log-probabilities on every snippet; "
                f"missing for reports {missing[:5]}"
            )
        scores = [float(s.confidence) for s in snippets]
    elif strategy == "reverse_chronological":
        scores = [float(s.relative_day) for s in snippets]
    else:
        if seed is None:
            raise ValueError("random ranking requires a seed")
        rng = random.Random(seed)
        scores = [rng.random() for _ in snippets]

    order = sorted(range(len(snippets)), key=lambda i: (-scores[i], _tiebreak(snippets[i])))
    return [
        RankedEvidence(snippet=snippets[i], score=scores[i], strategy=strategy, rank=pos + 1)
        for pos, i in enumerate(order)
    ]


_WS = re.compile(r"\s+")


def _normalized_text(text: str) -> str:
    return _WS.sub(" ", text).strip().lower()


def mark_duplicates(ranked: Sequence[RankedEvidence]) -> list[RankedEvidence]:
    """Flag snippets whose normalized text repeats a higher-ranked one."""
    first_seen: dict[str, int] = {}
    out = []
    for item in ranked:
        key = _normalized_text(item.snippet.text)
        if key in first_seen:
            out.append(
                RankedEvidence(
                    snippet=item.snippet,
                    score=item.score,
                    strategy=item.strategy,
                    rank=item.rank,
                    duplicate_of=first_seen[key],
                )
            )
        else:
            first_seen[key] = item.rank
            out.append(item)
    return out


def save_ranked(
    ranked_by_patient: dict[str, Sequence[RankedEvidence]], path: str | Path
) -> None:
    """Write rankings as JSON Lines, one ranked snippet per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for patient_id, ranked in ranked_by_patient.items():
            for item in ranked:
                s = item.snippet
                fh.write(
                    json.dumps(
                        {
                            "patient_id": patient_id,
                            "rank": item.rank,
                            "strategy": item.strategy,
                            "score": item.score,
                            "report_id": s.report_id,
                            "query": s.query.term if s.query else None,
                            "text": s.text,
                            "relative_day": s.relative_day,
                            "duplicate_of": item.duplicate_of,
                        }
                    )
                    + "\n"
                )
