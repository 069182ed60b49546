"""Encoder transfer: classification and rating-regression heads with
declarative layer freezing.

The freezing variants act on whole parameter groups:
  L    - train the last recurrent encoder layer plus the head
  HL   - additionally train the first convolutional layer
  none - train everything from the given (usually random) initialization
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .audio import AudioBuffer, FeatureMatrix
from .errors import (CheckpointError, ConfigError, DegenerateDataError,
                     InvalidParameterError)
from .nn import tensor as T
from .nn.optim import AdaDeltaState, adadelta_step, clip_global_norm
from .nn.params import Model, ParamGroup, set_trainable, uniform_param
from .asr.model import AsrConfig, build_encoder_groups, encode, model_asr_config
from .asr.train import GRAD_CLIP_NORM

logger = logging.getLogger(__name__)

DEMENTIA, NON_DEMENTIA = 1, 0

MAX_SEGMENT_SECONDS = 15 * 60

SCORE_BOUNDS = {"mmse": (0.0, 30.0), "cdr": (0.0, 3.0), "cdr_sob": (0.0, 18.0)}


@dataclass(frozen=True)
class FreezeSpec:
    variant: str  # "L" | "HL" | "none"

    VARIANTS = ("L", "HL", "none")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ConfigError(f"unknown freeze variant {self.variant!r}")

    def trainable_groups(self, model: Model) -> set[str]:
        if self.variant == "none":
            return set(model.groups)
        last = _last_blstm_group(model)
        names = {last, "head.linear"}
        if self.variant == "HL":
            names.add("encoder.vgg.conv1")
        return names

    def apply(self, model: Model) -> None:
        set_trainable(model, self.trainable_groups(model))


@dataclass(frozen=True)
class HeadConfig:
    task: str = "classification"  # classification | regression
    pooling: str = "mean"  # mean | last
    threshold: float = 0.5
    target: Optional[str] = None  # which rating a regression head predicts
    score_bounds: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ConfigError(f"unknown head task {self.task!r}")
        if self.pooling not in ("mean", "last"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie strictly inside (0, 1)")
        if (self.task == "regression" and self.score_bounds is None
                and self.target in SCORE_BOUNDS):
            object.__setattr__(self, "score_bounds", SCORE_BOUNDS[self.target])

    def to_dict(self) -> dict:
        return {"task": self.task, "pooling": self.pooling,
                "threshold": self.threshold, "target": self.target,
                "score_bounds": list(self.score_bounds) if self.score_bounds else None}

    @classmethod
    def from_dict(cls, d: dict) -> "HeadConfig":
        d = dict(d)
        if d.get("score_bounds"):
            d["score_bounds"] = tuple(d["score_bounds"])
        return cls(**d)


@dataclass
class SubjectSample:
    """One per-subject segment with its diagnosis and/or rating."""

    subject_id: str
    features: FeatureMatrix
    label: Optional[int] = None
    score: Optional[float] = None
    audio: Optional[AudioBuffer] = None  # kept for waveform augmentation

    def __post_init__(self):
        if self.features.duration_s > MAX_SEGMENT_SECONDS:
            raise InvalidParameterError(
                f"segment of {self.features.duration_s:.0f}s exceeds the "
                f"{MAX_SEGMENT_SECONDS}s guard")


def _last_blstm_group(model: Model) -> str:
    layers = [name for name in model.groups if name.startswith("encoder.blstm.layer")]
    if not layers:
        raise CheckpointError("model has no encoder.blstm.* groups")
    return max(layers, key=lambda n: int(n.rsplit("layer", 1)[1]))


def extract_encoder(model: Model) -> Model:
    """Copy the encoder.* groups out of an ASR model, dropping the rest."""
    encoder_groups = []
    for group in model.groups.values():
        if group.name.startswith("encoder."):
            tensors = {name: T.Tensor(tensor.data.copy(), requires_grad=True)
                       for name, tensor in group.tensors.items()}
            encoder_groups.append(ParamGroup(group.name, tensors))
    if not encoder_groups:
        raise CheckpointError("checkpoint contains no encoder.* groups")
    meta = {"kind": "encoder", "asr_config": model.meta["asr_config"]}
    return Model(encoder_groups, meta=meta)


def build_scratch_encoder(cfg: AsrConfig, seed: int) -> Model:
    rng = np.random.default_rng(seed)
    groups = build_encoder_groups(cfg, rng)
    return Model(groups, meta={"kind": "encoder", "asr_config": cfg.to_dict()})


def attach_head(encoder: Model, head: HeadConfig, seed: int) -> Model:
    """Return a new model: the encoder groups plus a fresh head.linear."""
    cfg = model_asr_config(encoder)
    rng = np.random.default_rng(seed)
    groups = []
    for group in encoder.groups.values():
        tensors = {name: T.Tensor(tensor.data.copy(), requires_grad=True)
                   for name, tensor in group.tensors.items()}
        groups.append(ParamGroup(group.name, tensors))
    limit = 1.0 / np.sqrt(cfg.encoder_width)
    groups.append(ParamGroup("head.linear", {
        "w": uniform_param((cfg.encoder_width, 1), rng, limit),
        "b": uniform_param((1,), rng, limit),
    }))
    meta = {"kind": "head", "asr_config": cfg.to_dict(), "head_config": head.to_dict()}
    return Model(groups, meta=meta)


def pool_encoder_output(enc_out: T.Tensor, pooling: str) -> T.Tensor:
    if pooling == "mean":
        return T.mean(enc_out, axis=0, keepdims=True)  # [1, 2H]
    return enc_out[-1:, :]


def head_logit(features, model: Model, head: HeadConfig,
               cfg: AsrConfig | None = None) -> T.Tensor:
    enc_out = encode(features, model, cfg)
    pooled = pool_encoder_output(enc_out, head.pooling)
    params = model.group("head.linear").tensors
    return T.linear(pooled, params["w"], params["b"])  # [1, 1]


def classify(sample: SubjectSample, model: Model,
             head: HeadConfig) -> tuple[float, int]:
    """Sigmoid probability plus the thresholded diagnosis.

    Exactly at the threshold the call sides with non-dementia (strict >).
    """
    logit = head_logit(sample.features, model, head)
    prob = float(T.sigmoid(logit).data[0, 0])
    label = DEMENTIA if prob > head.threshold else NON_DEMENTIA
    return prob, label


def predict_score(sample: SubjectSample, model: Model, head: HeadConfig) -> float:
    """Raw linear rating prediction, clamped to the score scale for reporting."""
    value = float(head_logit(sample.features, model, head).data[0, 0])
    if head.score_bounds is not None:
        lo, hi = head.score_bounds
        value = min(max(value, lo), hi)
    return value


@dataclass
class FinetuneSettings:
    epochs: int = 40
    seed: int = 0
    rho: float = 0.95
    eps: float = 1e-6


@dataclass
class FinetuneResult:
    model: Model
    losses: list[float] = field(default_factory=list)


def finetune(samples: Sequence[SubjectSample], encoder: Model, freeze: FreezeSpec,
             head: HeadConfig, settings: FinetuneSettings = FinetuneSettings()) -> FinetuneResult:
    """Fit a head (and the unfrozen encoder groups) on subject samples.

    Classification minimizes binary cross-entropy, regression mean squared
    error, both with per-sample AdaDelta steps. Frozen groups come out
    bit-identical to the input encoder.
    """
    samples = list(samples)
    if head.task == "classification":
        labels = {s.label for s in samples}
        if len(labels) < 2:
            raise DegenerateDataError("classification needs both classes present")
        targets = [float(s.label) for s in samples]
    else:
        scores = [s.score for s in samples]
        if len(set(scores)) < 2:
            raise DegenerateDataError("regression needs at least two distinct scores")
        targets = [float(s) for s in scores]

    model = attach_head(encoder, head, settings.seed)
    freeze.apply(model)
    cfg = model_asr_config(model)
    opt_state = AdaDeltaState.for_model(model, rho=settings.rho, eps=settings.eps)

    result = FinetuneResult(model=model)
    for epoch in range(settings.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([settings.seed, epoch]))
        order = rng.permutation(len(samples))
        epoch_losses = []
        for idx in order:
            sample, target = samples[idx], targets[idx]
            model.zero_grad()
            logit = head_logit(sample.features, model, head, cfg)
            if head.task == "classification":
                loss = T.sigmoid_bce(logit, target)
            else:
                err = T.sub(logit, target)
                loss = T.sum_(T.mul(err, err))
            loss.backward()
            clip_global_norm(model, GRAD_CLIP_NORM)
            adadelta_step(model, opt_state)
            epoch_losses.append(loss.item())
        result.losses.append(float(np.mean(epoch_losses)))
    return result
