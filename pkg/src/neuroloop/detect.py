"""Classification and post-processing.

ERD/ERS quantification, a ridge-regularized Fisher discriminant, the logistic
confusion index, threshold-based command/non-control labeling, and dwell /
refractory event debouncing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureVector
from .sigcore import SignalError

COMMAND = "COMMAND"
NON_CONTROL = "NON_CONTROL"


class InsufficientDataError(SignalError):
    """A class has too few samples to estimate its statistics."""


class SingularityError(SignalError):
    """Pooled covariance is singular; advise ridge > 0."""


class LayoutMismatchError(SignalError):
    """Feature vector layout does not match the model."""


def erd_percent(active_power: float, reference_power: float) -> float:
    """Band-power change relative to a reference interval, in percent.

    Negative values are desynchronization (ERD), positive synchronization
    (ERS).
    """
    if not reference_power > 0:
        raise SignalError(f"reference power must be > 0, got {reference_power}")
    if active_power < 0:
        raise SignalError("active power must be >= 0")
    return 100.0 * (active_power - reference_power) / reference_power


@dataclass(frozen=True)
class LdaModel:
    """Fisher discriminant: score = weights . features + bias.

    Positive scores lean toward ``classes[1]``. The bias puts the decision
    boundary at the midpoint of the projected class means.
    """

    weights: np.ndarray
    bias: float
    classes: tuple[str, str]
    ridge: float
    layout: tuple[tuple[int, str, object], ...]
    normalizer_mean: np.ndarray | None = None
    normalizer_std: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)) or not math.isfinite(self.bias):
            raise SignalError("model weights/bias must be finite")

    def to_json(self) -> str:
        doc = {
            "layout": [list(d) for d in self.layout],
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "classes": list(self.classes),
            "ridge": self.ridge,
            "meta": self.meta,
        }
        if self.normalizer_mean is not None:
            doc["normalizer_mean"] = np.asarray(self.normalizer_mean).tolist()
            doc["normalizer_std"] = np.asarray(self.normalizer_std).tolist()
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LdaModel":
        doc = json.loads(text)
        return cls(
            weights=np.array(doc["weights"]),
            bias=doc["bias"],
            classes=tuple(doc["classes"]),
            ridge=doc["ridge"],
            layout=tuple(tuple(d) for d in doc["layout"]),
            normalizer_mean=(np.array(doc["normalizer_mean"])
                             if "normalizer_mean" in doc else None),
            normalizer_std=(np.array(doc["normalizer_std"])
                            if "normalizer_std" in doc else None),
            meta=doc.get("meta", {}),
        )


def default_ridge(pooled_cov: np.ndarray) -> float:
    """Small-sample default: 1e-3 * trace(cov) / dim."""
    d = pooled_cov.shape[0]
    return 1e-3 * float(np.trace(pooled_cov)) / d


def lda_train(vectors, labels, ridge: float | None = None,
              classes: tuple[str, str] = ("CLEAR", "CONFUSED")) -> LdaModel:
    """Train a two-class Fisher discriminant.

    ``vectors`` may be FeatureVectors (sharing one layout) or a plain
    (n, d) array; ``labels`` are 0/1 per row. ``ridge`` defaults to
    1e-3 * trace(pooled_cov) / d; pass 0 to disable regularization.
    """
    if isinstance(vectors, (list, tuple)) and vectors \
            and isinstance(vectors[0], FeatureVector):
        layout = vectors[0].layout
        for v in vectors:
            if v.layout != layout:
                raise LayoutMismatchError("training vectors have mixed layouts")
        x = np.stack([v.values for v in vectors])
    else:
        x = np.asarray(vectors, dtype=np.float64)
        layout = tuple((0, "raw", i) for i in range(x.shape[1]))
    y = np.asarray(labels)
    if x.ndim != 2 or len(y) != len(x):
        raise SignalError("need (n, d) vectors and n labels")

    x0, x1 = x[y == 0], x[y == 1]
    if len(x0) < 2 or len(x1) < 2:
        raise InsufficientDataError(
            f"need at least 2 samples per class, got {len(x0)} and {len(x1)}"
        )
    mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
    scatter = ((x0 - mu0).T @ (x0 - mu0)) + ((x1 - mu1).T @ (x1 - mu1))
    pooled = scatter / (len(x) - 2)
    if ridge is None:
        ridge = default_ridge(pooled)
    if ridge < 0:
        raise SignalError("ridge must be >= 0")
    sigma = pooled + ridge * np.eye(pooled.shape[0])
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(
            "pooled covariance is singular; retrain with ridge > 0"
        ) from exc
    diff = mu1 - mu0
    w = np.linalg.solve(chol.T, np.linalg.solve(chol, diff))
    bias = -float(w @ (mu0 + mu1)) / 2.0
    return LdaModel(weights=w, bias=bias, classes=classes, ridge=float(ridge),
                    layout=layout,
                    meta={"n0": int(len(x0)), "n1": int(len(x1))})


def lda_score(model: LdaModel, v) -> float:
    """Signed discriminant score; positive leans toward classes[1]."""
    if isinstance(v, FeatureVector):
        if v.layout != model.layout:
            raise LayoutMismatchError("feature layout does not match the model")
        values = v.values
    else:
        values = np.asarray(v, dtype=np.float64)
        if values.shape != model.weights.shape:
            raise LayoutMismatchError(
                f"expected {model.weights.shape[0]} features, got {values.shape}"
            )
    return float(model.weights @ values + model.bias)


def confusion_index(score: float) -> float:
    """Logistic squashing of the discriminant score into [0, 1]."""
    if not math.isfinite(score):
        raise SignalError(f"score must be finite, got {score}")
    if score >= 0:
        return 1.0 / (1.0 + math.exp(-score))
    e = math.exp(score)
    return e / (1.0 + e)


def threshold_state(index: float, theta: float) -> str:
    """COMMAND iff index > theta (strict); ties stay NON_CONTROL."""
    if math.isnan(index):
        raise SignalError("confusion index is NaN")
    if not 0 <= theta <= 1:
        raise SignalError(f"threshold must lie in [0, 1], got {theta}")
    return COMMAND if index > theta else NON_CONTROL


@dataclass
class Debouncer:
    """Dwell/refractory event gate over a COMMAND/NON_CONTROL label stream.

    An event fires on the dwell-th consecutive COMMAND; for the next
    ``refractory`` labels all input is ignored; a NON_CONTROL resets the run.
    Single-owner per stream.
    """

    dwell: int
    refractory: int = 0
    run_length: int = 0
    cooldown: int = 0

    def __post_init__(self):
        if self.dwell < 1:
            raise SignalError("dwell must be >= 1")
        if self.refractory < 0:
            raise SignalError("refractory must be >= 0")

    def push(self, label: str) -> bool:
        """Feed one label; True when an event fires at this index."""
        if self.cooldown > 0:
            self.cooldown -= 1
            return False
        if label == COMMAND:
            self.run_length += 1
            if self.run_length >= self.dwell:
                self.run_length = 0
                self.cooldown = self.refractory
                return True
        else:
            self.run_length = 0
        return False

    def reset(self):
        self.run_length = 0
        self.cooldown = 0


def debounce(deb: Debouncer, label_stream) -> list[int]:
    """Run a label sequence through the gate; return firing indices."""
    return [i for i, label in enumerate(label_stream) if deb.push(label)]


@dataclass(frozen=True)
class DetectorState:
    """Per-epoch detector output handed to the session engine."""

    label: str
    score: float
    confusion: float
    reliable: bool = True
