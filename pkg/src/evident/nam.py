"""Neural additive risk head over frozen evidence features.

Per condition i, the aggregate prediction is

    p_i = sigmoid(b_i + mean_j(w_i . f_j))

over the features f_j of a patient's evidence snippets. The additive form
means every snippet's individual contribution w_i . f_j is an exact
log-odds-ratio "vote": the mean of the votes is the aggregate evidence
term. Biases are never learned; they are pinned to the inverse sigmoid of
the training prevalence, which makes population recalibration a pure bias
swap that leaves votes and rankings untouched.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorpusError
from .metrics import macro_auroc

FORMAT_VERSION = 1

# One training example: (features, labels) where features is (E, d) with E
# possibly 0 and labels is a (Q,) 0/1 vector.
Example = tuple[np.ndarray, np.ndarray]


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable logistic function; scalar in, scalar out."""
    arr = np.asarray(z, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ez = np.exp(arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out[0]) if scalar else out


def inverse_sigmoid(p: np.ndarray | float) -> np.ndarray | float:
    """Logit of probabilities strictly inside (0, 1); scalar in, scalar out."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise ValueError(f"probabilities must lie strictly in (0, 1), got {p}")
    out = np.log(arr) - np.log1p(-arr)
    return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class RiskModel:
    """Per-condition weight vectors and prevalence-derived biases."""

    conditions: tuple[str, ...]
    weights: np.ndarray  # (Q, d)
    biases: np.ndarray  # (Q,)
    train_prevalence: np.ndarray  # (Q,)
    embedder_id: str
    d: int

    def __post_init__(self) -> None:
        q = len(self.conditions)
        if self.weights.shape != (q, self.d):
            raise ValueError(f"weights shape {self.weights.shape} != ({q}, {self.d})")
        if self.biases.shape != (q,) or self.train_prevalence.shape != (q,):
            raise ValueError("biases and train_prevalence must be (Q,) vectors")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @classmethod
    def initial(
        cls,
        conditions: Sequence[str],
        d: int,
        train_prevalence: Sequence[float],
        embedder_id: str,
    ) -> "RiskModel":
        """Zero-weight model: exactly the prevalence prior."""
        prevalence = np.asarray(train_prevalence, dtype=np.float64)
        return cls(
            conditions=tuple(conditions),
            weights=np.zeros((len(conditions), d)),
            biases=inverse_sigmoid(prevalence),
            train_prevalence=prevalence,
            embedder_id=embedder_id,
            d=d,
        )


@dataclass(frozen=True)
class Prediction:
    """Aggregate and per-evidence outputs for one patient."""

    probabilities: np.ndarray  # (Q,)
    aggregate_log_odds: np.ndarray  # (Q,)
    per_evidence: np.ndarray  # (E, Q) log-odds votes
    relative_risk: np.ndarray  # (Q,)


def prior(model: RiskModel) -> np.ndarray:
    """Per-condition probability with the evidence term excluded."""
    return sigmoid(model.biases)


def _as_feature_matrix(features: Sequence[np.ndarray] | np.ndarray, d: int) -> np.ndarray:
    mat = np.asarray(features, dtype=np.float64)
    if mat.size == 0:
        return mat.reshape(0, d)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2 or mat.shape[1] != d:
        raise ValueError(f"features must be (E, {d}), got {mat.shape}")
    return mat


def predict(model: RiskModel, features: Sequence[np.ndarray] | np.ndarray) -> Prediction:
    """Aggregate prediction over any number of evidence features.

    With no evidence the prediction is exactly the prior. The aggregate
    evidence term is computed as the mean of the per-evidence votes, so the
    additive decomposition holds by construction.
    """
    mat = _as_feature_matrix(features, model.d)
    per_evidence = mat @ model.weights.T  # (E, Q)
    if len(mat) == 0:
        aggregate = np.zeros(len(model.conditions))
    else:
        aggregate = per_evidence.mean(axis=0)
    probabilities = sigmoid(model.biases + aggregate)
    return Prediction(
        probabilities=probabilities,
        aggregate_log_odds=aggregate,
        per_evidence=per_evidence,
        relative_risk=probabilities / sigmoid(model.biases),
    )


def vote(model: RiskModel, feature: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-snippet probabilities and log-odds votes.

    The log-odds vote w_i . f is the shift this snippet alone applies to
    the prior logit.
    """
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (model.d,):
        raise ValueError(f"feature must be ({model.d},), got {f.shape}")
    log_odds = model.weights @ f
    return sigmoid(model.biases + log_odds), log_odds


def recalibrate(model: RiskModel, new_prevalence: Sequence[float]) -> RiskModel:
    """Swap biases to a new population prevalence; weights are untouched."""
    prevalence = np.asarray(new_prevalence, dtype=np.float64)
    if prevalence.shape != (len(model.conditions),):
        raise ValueError(f"need {len(model.conditions)} prevalence values")
    return dataclasses.replace(model, biases=inverse_sigmoid(prevalence))


def loss_and_gradient(
    model: RiskModel, batch: Sequence[Example]
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over examples and conditions, with its
    closed-form weight gradient.

    Biases receive no gradient. An example with no evidence predicts the
    prior and contributes zero weight gradient.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    q = len(model.conditions)
    total = 0.0
    grad = np.zeros_like(model.weights)
    for features, labels in batch:
        mat = _as_feature_matrix(features, model.d)
        y = np.asarray(labels, dtype=np.float64)
        if y.shape != (q,):
            raise ValueError(f"labels must be ({q},), got {y.shape}")
        mean_feature = mat.mean(axis=0) if len(mat) else np.zeros(model.d)
        z = model.biases + model.weights @ mean_feature
        total += float(np.sum(np.logaddexp(0.0, z) - y * z))
        grad += np.outer(sigmoid(z) - y, mean_feature)
    scale = len(batch) * q
    return total / scale, grad / scale


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    lr: float = 0.1
    batch_size: int = 32
    seed: int = 0
    checkpoints_per_epoch: int = 20

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class CheckpointRecord:
    step: int  # global 1-based batch index
    epoch: int
    fraction: float  # position within the epoch, (0, 1]
    val_macro_auroc: float


@dataclass
class TrainResult:
    model: RiskModel  # best checkpoint by validation macro-AUROC
    history: list[CheckpointRecord]
    best_step: int
    config: TrainConfig = field(default_factory=TrainConfig)


def train_prevalence_of(examples: Sequence[Example], conditions: Sequence[str]) -> np.ndarray:
    """Observed per-condition positive rate; must be strictly interior."""
    if not examples:
        raise CorpusError("empty training set")
    labels = np.stack([np.asarray(y, dtype=np.float64) for _, y in examples])
    prevalence = labels.mean(axis=0)
    for name, p in zip(conditions, prevalence):
        if p <= 0 or p >= 1:
            raise CorpusError(
                f"condition {name!r} has prevalence {p} in the training set; "
                "need both positive and negative examples"
            )
    return prevalence


def train(
    train_set: Sequence[Example],
    val_set: Sequence[Example],
    conditions: Sequence[str],
    embedder_id: str,
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Plain mini-batch gradient descent with a fixed learning rate.

    Validation macro-AUROC is evaluated at every 5%-of-epoch checkpoint
    (``checkpoints_per_epoch`` per epoch, scheduled on batch boundaries so
    the count is exact even when an epoch has few batches) and the best
    checkpoint wins, first occurrence breaking ties. Deterministic given
    the config seed.
    """
    if not train_set:
        raise CorpusError("empty training set")
    if not val_set:
        raise CorpusError("empty validation set")
    d = None
    for features, _ in list(train_set) + list(val_set):
        mat = np.asarray(features, dtype=np.float64)
        if mat.size:
            d = mat.shape[-1]
            break
    if d is None:
        raise CorpusError("no example carries any evidence features; cannot infer dimension")

    prevalence = train_prevalence_of(train_set, conditions)
    model = RiskModel.initial(conditions, d, prevalence, embedder_id)

    rng = np.random.default_rng(config.seed)
    n = len(train_set)
    batch_count = max(1, math.ceil(n / config.batch_size))
    # checkpoint k of an epoch fires after batch ceil(k * B / cpe)
    fire_after: dict[int, list[int]] = {}
    for k in range(1, config.checkpoints_per_epoch + 1):
        b = math.ceil(k * batch_count / config.checkpoints_per_epoch)
        fire_after.setdefault(b, []).append(k)

    val_labels = np.stack([np.asarray(y, dtype=np.float64) for _, y in val_set])
    val_features = [f for f, _ in val_set]

    def validation_metric(m: RiskModel) -> float:
        probs = np.stack([predict(m, f).probabilities for f in val_features])
        value = macro_auroc(probs, val_labels)
        return 0.5 if value is None else value

    history: list[CheckpointRecord] = []
    best_metric = -math.inf
    best_weights = model.weights.copy()
    best_step = 0
    step = 0
    weights = model.weights.copy()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for b in range(batch_count):
            batch = [train_set[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            step += 1
            if batch and config.lr != 0.0:
                current = dataclasses.replace(model, weights=weights)
                _, grad = loss_and_gradient(current, batch)
                weights = weights - config.lr * grad
            for k in fire_after.get(b + 1, ()):
                candidate = dataclasses.replace(model, weights=weights.copy())
                metric = validation_metric(candidate)
                history.append(
                    CheckpointRecord(
                        step=step,
                        epoch=epoch,
                        fraction=k / config.checkpoints_per_epoch,
                        val_macro_auroc=metric,
                    )
                )
                if metric > best_metric:
                    best_metric = metric
                    best_weights = weights.copy()
                    best_step = step
    best_model = dataclasses.replace(model, weights=best_weights)
    return TrainResult(model=best_model, history=history, best_step=best_step, config=config)


def save_model(result_or_model: TrainResult | RiskModel, path: str | Path) -> None:
    """Write a versioned JSON checkpoint."""
    if isinstance(result_or_model, TrainResult):
        model = result_or_model.model
        training_config = result_or_model.config.to_dict()
        history = [dataclasses.asdict(rec) for rec in result_or_model.history]
    else:
        model = result_or_model
        training_config = None
        history = []
    payload = {
        "format_version": FORMAT_VERSION,
        "conditions": list(model.conditions),
        "d": model.d,
        "embedder_id": model.embedder_id,
        "weights": model.weights.tolist(),
        "biases": model.biases.tolist(),
        "train_prevalence": model.train_prevalence.tolist(),
        "training_config": training_config,
        "checkpoint_history": history,
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[RiskModel, dict]:
    """Read a checkpoint; returns the model and the raw metadata record."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CorpusError(f"unsupported checkpoint format_version {version!r}")
    model = RiskModel(
        conditions=tuple(payload["conditions"]),
        weights=np.asarray(payload["weights"], dtype=np.float64),
        biases=np.asarray(payload["biases"], dtype=np.float64),
        train_prevalence=np.asarray(payload["train_prevalence"], dtype=np.float64),
        embedder_id=payload["embedder_id"],
        d=payload["d"],
    )
    return model, payload
