"""ASR training loop: per-utterance AdaDelta steps with teacher forcing.

Deterministic under a fixed seed: parameter init, epoch shuffles, and the
optimizer state are all derived from it, and the rolling checkpoint stores
enough to resume at epoch k and reproduce an uninterrupted run exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..audio import DspConfig, decode_wav, extract_features
from ..errors import DegenerateDataError, FormatError, UnsupportedFormatError
from ..manifest import UtteranceRecord, read_manifest, wav_path
from ..nn.optim import AdaDeltaState, adadelta_step, clip_global_norm
from ..nn.params import Model, load_checkpoint, save_checkpoint
from .metrics import corpus_cer
from .model import AsrConfig, build_asr_model, decode_train, encode, greedy_decode
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)

GRAD_CLIP_NORM = 5.0


@dataclass
class TrainSettings:
    epochs: int = 200
    seed: int = 0
    stop_cer: Optional[float] = None
    rho: float = 0.95
    eps: float = 1e-6
    eval_every: int = 1
    max_decode_len: int = 64


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_cer: float
    dev_cer: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "split": "train", "loss": self.loss,
                "cer": self.train_cer, "dev_cer": self.dev_cer}


@dataclass
class PreparedUtterance:
    record: UtteranceRecord
    features: object
    target_ids: list[int]


@dataclass
class TrainResult:
    model: Model
    tokenizer: Tokenizer
    history: list[EpochStats] = field(default_factory=list)


def prepare_utterances(records, manifest_path, dsp: DspConfig,
                       tokenizer: Tokenizer) -> list[PreparedUtterance]:
    """Decode and featurize the corpus, skipping undecodable audio."""
    prepared = []
    for record in records:
        path = wav_path(record, manifest_path)
        try:
            audio = decode_wav(Path(path).read_bytes())
            features = extract_features(audio, dsp)
        except (OSError, FormatError, UnsupportedFormatError, ValueError) as exc:
            logger.warning("skipping utterance %s: %s", record.id, exc)
            continue
        prepared.append(PreparedUtterance(record, features,
                                          tokenizer.encode(record.transcript)))
    return prepared


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch]))


def _corpus_greedy_cer(model: Model, cfg: AsrConfig, tokenizer: Tokenizer,
                       utterances, max_len: int) -> float:
    pairs = []
    for utt in utterances:
        hyp = tokenizer.decode(greedy_decode(encode(utt.features, model, cfg),
                                             model, max_len, cfg))
        pairs.append((utt.record.transcript, hyp))
    return corpus_cer(pairs)


def train_asr(manifest_path, dsp: DspConfig, cfg: Optional[AsrConfig] = None,
              settings: TrainSettings = TrainSettings(),
              out_dir=None, dev_manifest_path=None,
              resume: bool = False) -> TrainResult:
    """Train from a manifest; returns the model, tokenizer, and history.

    When out_dir is given, a rolling checkpoint and a JSONL training log
    are written every epoch. With resume=True and an existing checkpoint,
    training continues from the stored epoch with identical results to an
    uninterrupted run.
    """
    records = read_manifest(manifest_path)
    tokenizer = Tokenizer.from_texts(r.transcript for r in records)
    train_utts = prepare_utterances(records, manifest_path, dsp, tokenizer)
    if not train_utts:
        raise DegenerateDataError("no decodable utterances in the corpus")
    if dev_manifest_path is not None:
        dev_records = read_manifest(dev_manifest_path)
        dev_utts = prepare_utterances(dev_records, dev_manifest_path, dsp, tokenizer)
    else:
        dev_utts = train_utts

    if cfg is None:
        cfg = AsrConfig(vocab_size=tokenizer.vocab_size, n_mels=dsp.n_mels)
    if cfg.vocab_size != tokenizer.vocab_size:
        raise DegenerateDataError(
            f"config vocab_size {cfg.vocab_size} != corpus vocabulary {tokenizer.vocab_size}")

    out_dir = Path(out_dir) if out_dir is not None else None
    ckpt_path = out_dir / "asr_latest.ckpt" if out_dir else None
    log_path = out_dir / "train_log.jsonl" if out_dir else None

    start_epoch = 0
    if resume and ckpt_path is not None and ckpt_path.exists():
        model, opt_state = load_checkpoint(ckpt_path)
        start_epoch = int(model.meta["epoch"])
        logger.info("resuming from %s at epoch %d", ckpt_path, start_epoch)
    else:
        model = build_asr_model(cfg, settings.seed)
        opt_state = AdaDeltaState.for_model(model, rho=settings.rho, eps=settings.eps)
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
            if log_path.exists():
                log_path.unlink()

    model.meta.update({"tokenizer": tokenizer.to_dict(),
                       "dsp_config": _dsp_to_dict(dsp)})

    result = TrainResult(model=model, tokenizer=tokenizer)
    for epoch in range(start_epoch, settings.epochs):
        order = _epoch_rng(settings.seed, epoch).permutation(len(train_utts))
        losses = []
        for idx in order:
            utt = train_utts[idx]
            model.zero_grad()
            loss = decode_train(encode(utt.features, model, cfg), utt.target_ids,
                                model, cfg)
            loss.backward()
            clip_global_norm(model, GRAD_CLIP_NORM)
            adadelta_step(model, opt_state)
            losses.append(loss.item())

        if (epoch + 1) % settings.eval_every == 0 or epoch + 1 == settings.epochs:
            train_cer = _corpus_greedy_cer(model, cfg, tokenizer, train_utts,
                                           settings.max_decode_len)
            dev_cer = (train_cer if dev_utts is train_utts else
                       _corpus_greedy_cer(model, cfg, tokenizer, dev_utts,
                                          settings.max_decode_len))
        else:
            train_cer = dev_cer = float("nan")
        stats = EpochStats(epoch=epoch + 1, loss=float(np.mean(losses)),
                           train_cer=train_cer, dev_cer=dev_cer)
        result.history.append(stats)
        logger.info("epoch %d loss %.4f train_cer %.4f dev_cer %.4f",
                    stats.epoch, stats.loss, stats.train_cer, stats.dev_cer)

        if out_dir:
            model.meta["epoch"] = epoch + 1
            save_checkpoint(model, ckpt_path, opt_state)
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(stats.to_dict(), sort_keys=True) + "\n")
        if settings.stop_cer is not None and train_cer <= settings.stop_cer:
            logger.info("stopping early: train CER %.4f <= %.4f",
                        train_cer, settings.stop_cer)
            break
    if out_dir:
        save_checkpoint(model, out_dir / "asr_final.ckpt", opt_state)
    return result


def _dsp_to_dict(dsp: DspConfig) -> dict:
    return {
        "frame_length_ms": dsp.frame_length_ms, "frame_hop_ms": dsp.frame_hop_ms,
        "n_mels": dsp.n_mels, "fft_size": dsp.fft_size,
        "mel_low_hz": dsp.mel_low_hz, "mel_high_hz": dsp.mel_high_hz,
        "log_floor": dsp.log_floor, "delta_window": dsp.delta_window,
        "preemphasis": dsp.preemphasis,
        "mean_variance_normalize": dsp.mean_variance_normalize,
    }
