"""Dataset assembly and the model families run_cv can cross-validate.

A recipe bundles fit/predict for one system: the constant-prediction
reference, the summary-stat linear SVM, and the encoder-transfer heads
(pretrained or from scratch, under a freezing variant). Waveform
augmentation, when enabled for regression, is applied inside fit to the
training split only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio import AudioBuffer, DspConfig, decode_wav, extract_features
from .augment import AugmentSpec
from .baseline import LinearSvmModel, predict_linear, summarize, train_linear_svm
from .errors import DegenerateDataError
from .manifest import read_manifest, wav_path
from .nn.params import Model
from .nn.tensor import stable_sigmoid
from .asr.model import AsrConfig, model_asr_config
from .transfer import (FinetuneResult, FinetuneSettings, FreezeSpec, HeadConfig,
                       SubjectSample, build_scratch_encoder, classify, finetune,
                       predict_score)

logger = logging.getLogger(__name__)

DEFAULT_SNR_RANGE = (5.0, 25.0)
DEFAULT_SHIFT_RANGE_MS = (-200.0, 200.0)
DEFAULT_RATE_RANGE = (0.9, 1.1)
DEFAULT_PITCH_RANGE = (-2.0, 2.0)


def build_subject_samples(manifest_path, dsp: DspConfig, target: Optional[str] = None,
                          keep_audio: bool = False) -> list[SubjectSample]:
    """One sample per speaker: that speaker's utterances concatenated.

    `target` selects which rating becomes the regression score; labels come
    straight from the manifest.
    """
    records = read_manifest(manifest_path)
    by_speaker: dict[str, list] = {}
    for record in records:
        speaker = record.speaker or record.id
        by_speaker.setdefault(speaker, []).append(record)

    samples = []
    for speaker in sorted(by_speaker):
        group = by_speaker[speaker]
        waves = []
        rate = None
        for record in group:
            audio = decode_wav(Path(wav_path(record, manifest_path)).read_bytes())
            waves.append(audio.samples)
            rate = audio.sample_rate_hz
        segment = AudioBuffer(np.concatenate(waves), rate)
        first = group[0]
        score = first.scores.get(target) if target else None
        samples.append(SubjectSample(
            subject_id=speaker,
            features=extract_features(segment, dsp),
            label=first.label,
            score=float(score) if score is not None else None,
            audio=segment if keep_audio else None,
        ))
    return samples


def _augment_training_samples(samples: Sequence[SubjectSample], dsp: DspConfig,
                              multiplier: int, seed: int) -> list[SubjectSample]:
    """Expand the training split with `multiplier` augmented copies each.

    Each copy applies one randomly chosen augmentation with parameters from
    the default modest ranges. Samples without retained audio pass through
    unaugmented.
    """
    out = list(samples)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA06]))
    for sample in samples:
        if sample.audio is None:
            continue
        for copy_idx in range(multiplier):
            kind = AugmentSpec.KINDS[int(rng.integers(0, len(AugmentSpec.KINDS)))]
            aug_seed = int(rng.integers(0, 2**31 - 1))
            if kind == "noise":
                spec = AugmentSpec("noise", snr_db=float(rng.uniform(*DEFAULT_SNR_RANGE)),
                                   seed=aug_seed)
            elif kind == "time_shift":
                spec = AugmentSpec("time_shift",
                                   shift_ms=float(rng.uniform(*DEFAULT_SHIFT_RANGE_MS)),
                                   seed=aug_seed)
            elif kind == "time_stretch":
                spec = AugmentSpec("time_stretch",
                                   rate=float(rng.uniform(*DEFAULT_RATE_RANGE)),
                                   seed=aug_seed)
            else:
                spec = AugmentSpec("pitch_shift",
                                   semitones=float(rng.uniform(*DEFAULT_PITCH_RANGE)),
                                   seed=aug_seed)
            augmented = spec.apply(sample.audio)
            out.append(SubjectSample(
                subject_id=f"{sample.subject_id}#aug{copy_idx}",
                features=extract_features(augmented, dsp),
                label=sample.label, score=sample.score))
    return out


@dataclass
class ConstantRecipe:
    """Always predicts the same probability or score; the chance reference."""

    task: str = "classification"
    value: float = 0.0
    name: str = "constant"

    def fit(self, samples, seed: int):
        return self.value

    def predict(self, fitted, sample) -> float:
        return fitted


@dataclass
class SvmRecipe:
    """Summary-stat linear SVM over pooled per-subject features."""

    task: str = "classification"
    c: float = 1.0
    epochs: int = 200
    name: str = "summary-stat linear SVM"

    def fit(self, samples, seed: int) -> LinearSvmModel:
        vectors = [summarize(s.features) for s in samples]
        labels = [s.label for s in samples]
        return train_linear_svm(vectors, labels, c=self.c, epochs=self.epochs)

    def predict(self, fitted: LinearSvmModel, sample) -> float:
        # sigmoid keeps the score in [0, 1] with margin 0 mapping to 0.5,
        # so the 0.5 threshold reproduces sign(margin) with ties negative
        return float(stable_sigmoid(np.asarray([fitted.decision_value(
            summarize(sample.features))]))[0])


@dataclass
class TransferRecipe:
    """Encoder transfer (or from-scratch) head under a freezing variant."""

    task: str
    head: HeadConfig
    freeze: FreezeSpec
    encoder: Optional[Model] = None  # None: train from random initialization
    asr_config: Optional[AsrConfig] = None  # required when encoder is None
    epochs: int = 40
    dsp: DspConfig = field(default_factory=DspConfig)
    augment_multiplier: int = 0
    name: str = "transfer"

    def __post_init__(self):
        if self.encoder is None and self.asr_config is None:
            raise DegenerateDataError(
                "from-scratch recipe needs an architecture config")
        if self.encoder is None and self.freeze.variant != "none":
            raise DegenerateDataError(
                "freezing a random encoder is not meaningful; use variant 'none'")

    def fit(self, samples, seed: int) -> FinetuneResult:
        encoder = self.encoder
        if encoder is None:
            encoder = build_scratch_encoder(self.asr_config, seed)
        train_samples = list(samples)
        if self.task == "regression" and self.augment_multiplier > 0:
            train_samples = _augment_training_samples(
                train_samples, self.dsp, self.augment_multiplier, seed)
        settings = FinetuneSettings(epochs=self.epochs, seed=seed)
        return finetune(train_samples, encoder, self.freeze, self.head, settings)

    def predict(self, fitted: FinetuneResult, sample) -> float:
        if self.task == "classification":
            prob, _ = classify(sample, fitted.model, self.head)
            return prob
        return predict_score(sample, fitted.model, self.head)


def encoder_config(encoder: Model) -> AsrConfig:
    return model_asr_config(encoder)
