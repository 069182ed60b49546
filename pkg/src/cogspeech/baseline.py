"""Max-margin linear baseline over summary acoustic statistics.

The comparison system: per-column summary statistics of the feature matrix
(no spectral-feature toolchains — the report labels this the
"summary-stat linear SVM"), z-normalized with training-fold statistics,
classified by a linear SVM fit with full-batch subgradient descent on
0.5 ||w||^2 + C * sum hinge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import FeatureMatrix
from .errors import DegenerateDataError, ShapeError, TooShortError

VOICED_COLUMN_FRACTION = 1.0 / 3.0  # energy from the fbank block of the columns


def summarize(features: FeatureMatrix) -> np.ndarray:
    """Fixed-length summary vector: per-column {mean, std, p10, p90,
    skewness} plus duration and voiced-frame ratio.

    Statistics are time-permutation invariant; skewness is defined as 0
    for constant columns.
    """
    frames = np.asarray(features.frames, dtype=np.float64)
    if frames.shape[0] < 2:
        raise TooShortError("summary statistics need at least 2 frames")
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    p10 = np.percentile(frames, 10, axis=0)
    p90 = np.percentile(frames, 90, axis=0)
    centered = frames - mean
    m3 = np.mean(centered**3, axis=0)
    skew = np.where(std > 0, m3 / np.where(std > 0, std, 1.0) ** 3, 0.0)

    n_fbank = max(int(round(frames.shape[1] * VOICED_COLUMN_FRACTION)), 1)
    energy = frames[:, :n_fbank].mean(axis=1)
    voicing_threshold = 0.5 * (energy.min() + energy.max())
    voiced_ratio = float(np.mean(energy > voicing_threshold))
    duration = features.duration_s
    return np.concatenate([mean, std, p10, p90, skew, [duration, voiced_ratio]])


@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    norm_mean: np.ndarray
    norm_std: np.ndarray
    objective_history: list[float] = field(default_factory=list)

    def normalize(self, vector: np.ndarray) -> np.ndarray:
        return (vector - self.norm_mean) / self.norm_std

    def decision_value(self, vector: np.ndarray) -> float:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != self.weights.shape:
            raise ShapeError(
                f"feature vector of length {vector.shape} does not match "
                f"model dimension {self.weights.shape}")
        return float(self.weights @ self.normalize(vector) + self.bias)


def hinge_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray,
                    c: float) -> float:
    margins = 1.0 - y * (x @ w + b)
    return 0.5 * float(w @ w) + c * float(np.sum(np.maximum(margins, 0.0)))


def train_linear_svm(vectors, labels, c: float = 1.0, epochs: int = 200) -> LinearSvmModel:
    """Deterministic subgradient descent with a 1/t step; keeps the best
    iterate by objective value.

    Labels are {0, 1}; internally mapped to {-1, +1}. Feature columns are
    z-normalized with the training statistics stored in the model.
    """
    x = np.asarray(vectors, dtype=np.float64)
    y01 = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != len(y01):
        raise ShapeError("vectors must be (N, D) matching labels")
    if len(set(y01.tolist())) < 2:
        raise DegenerateDataError("linear SVM needs both classes present")
    y = np.where(y01 == 1, 1.0, -1.0)

    norm_mean = x.mean(axis=0)
    norm_std = x.std(axis=0)
    norm_std = np.where(norm_std > 1e-12, norm_std, 1.0)
    xn = (x - norm_mean) / norm_std

    w = np.zeros(x.shape[1])
    b = 0.0
    best = (np.inf, w.copy(), b)
    history = []
    for t in range(1, epochs + 1):
        margins = 1.0 - y * (xn @ w + b)
        violators = margins > 0.0
        grad_w = w - c * (y[violators] @ xn[violators])
        grad_b = -c * float(np.sum(y[violators]))
        eta = 1.0 / t
        w = w - eta * grad_w
        b = b - eta * grad_b
        obj = hinge_objective(w, b, xn, y, c)
        history.append(obj)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    _, w_best, b_best = best
    return LinearSvmModel(weights=w_best, bias=b_best, norm_mean=norm_mean,
                          norm_std=norm_std, objective_history=history)


def predict_linear(vector, model: LinearSvmModel) -> int:
    """1 for dementia when the margin is strictly positive, else 0."""
    return 1 if model.decision_value(vector) > 0.0 else 0
