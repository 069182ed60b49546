"""Synthetic tone-word corpus with a controllable class separation.

Each vocabulary character maps to a fixed tone frequency; an utterance is
a sequence of such tones, so transcripts are exact by construction. The
binary class is encoded as a spectral tilt (dB/octave) applied to the tone
amplitudes: at separation 0 the classes are statistically identical, at
large separations summary spectra become linearly separable. A per-subject
severity in [0, 1] drives both the tilt and the synthetic rating scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .audio import AudioBuffer, encode_wav
from .manifest import UtteranceRecord, write_manifest

SAMPLE_RATE = 16000
WORD_SECONDS = 0.12
GAP_SECONDS = 0.03
FADE_SECONDS = 0.01
BASE_AMPLITUDE = 0.25
PEAK_TARGET = 0.35
TONE_LOW_HZ = 350.0
TONE_HIGH_HZ = 2800.0
SEVERITY_MARGIN = 0.2  # severities keep clear of the 0.5 class boundary, so
                       # the between-class tilt gap is at least 0.4 * separation

VOCAB_CHARS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_speakers: int = 20
    utterances_per_speaker: int = 3
    vocab_size: int = 12
    class_separation_db: float = 8.0  # tilt gap, dB/octave, between class means
    seed: int = 0
    n_positive: Optional[int] = None  # default: balanced
    min_words: int = 3
    max_words: int = 8
    noise_floor_db: float = -30.0  # broadband bed level relative to the tones

    def __post_init__(self):
        if min(self.n_speakers, self.utterances_per_speaker, self.vocab_size,
               self.min_words) < 1:
            raise ValueError("all corpus counts must be >= 1")
        if self.class_separation_db < 0:
            raise ValueError("class separation must be >= 0")
        if self.vocab_size > len(VOCAB_CHARS):
            raise ValueError(f"vocab_size capped at {len(VOCAB_CHARS)}")
        if self.n_positive is not None and not 0 <= self.n_positive <= self.n_speakers:
            raise ValueError("n_positive outside [0, n_speakers]")

    @property
    def positives(self) -> int:
        return self.n_positive if self.n_positive is not None else self.n_speakers // 2

    def to_dict(self) -> dict:
        return {"n_speakers": self.n_speakers,
                "utterances_per_speaker": self.utterances_per_speaker,
                "vocab_size": self.vocab_size,
                "class_separation_db": self.class_separation_db,
                "seed": self.seed, "n_positive": self.n_positive,
                "min_words": self.min_words, "max_words": self.max_words,
                "noise_floor_db": self.noise_floor_db}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticCorpusSpec":
        return cls(**d)


def tone_frequencies(vocab_size: int) -> np.ndarray:
    """Log-spaced tone frequency per vocabulary character."""
    if vocab_size == 1:
        return np.array([math.sqrt(TONE_LOW_HZ * TONE_HIGH_HZ)])
    ratio = TONE_HIGH_HZ / TONE_LOW_HZ
    return TONE_LOW_HZ * ratio ** (np.arange(vocab_size) / (vocab_size - 1))


def _tilt_gain(freq_hz: float, tilt_db_per_octave: float) -> float:
    ref = math.sqrt(TONE_LOW_HZ * TONE_HIGH_HZ)
    octaves = math.log2(freq_hz / ref)
    return 10.0 ** (tilt_db_per_octave * octaves / 20.0)


def _tilted_noise(n: int, tilt_db_per_octave: float, rms: float,
                  rng: np.random.Generator) -> np.ndarray:
    """White noise whose spectrum is sloped by the tilt, normalized to rms."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    ref = math.sqrt(TONE_LOW_HZ * TONE_HIGH_HZ)
    octaves = np.log2(np.maximum(freqs, 20.0) / ref)
    spectrum *= 10.0 ** (tilt_db_per_octave * octaves / 20.0)
    shaped = np.fft.irfft(spectrum, n=n)
    return shaped * (rms / max(np.sqrt(np.mean(shaped**2)), 1e-12))


def synthesize_utterance(transcript: str, vocab: str, freqs: np.ndarray,
                         tilt_db_per_octave: float, rng: np.random.Generator,
                         noise_floor_db: float = -30.0) -> AudioBuffer:
    """Render a transcript as a tone sequence with the speaker's tilt.

    A broadband noise bed, spectrally sloped by the same tilt, sits under
    the tones so every frame carries class evidence in every band.
    """
    word_len = int(WORD_SECONDS * SAMPLE_RATE)
    gap_len = int(GAP_SECONDS * SAMPLE_RATE)
    fade_len = int(FADE_SECONDS * SAMPLE_RATE)
    envelope = np.ones(word_len)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade_len) / fade_len)
    envelope[:fade_len] = ramp
    envelope[-fade_len:] = ramp[::-1]

    pieces = []
    t = np.arange(word_len) / SAMPLE_RATE
    for ch in transcript:
        freq = float(freqs[vocab.index(ch)])
        gain = _tilt_gain(freq, tilt_db_per_octave)
        jitter = 10.0 ** (rng.uniform(-1.0, 1.0) / 20.0)  # +/- 1 dB per word
        tone = BASE_AMPLITUDE * gain * jitter * np.sin(2.0 * np.pi * freq * t)
        pieces.append(tone * envelope)
        pieces.append(np.zeros(gap_len))
    x = np.concatenate(pieces[:-1]) if len(pieces) > 1 else pieces[0]
    noise_rms = BASE_AMPLITUDE * 10.0 ** (noise_floor_db / 20.0)
    x = x + _tilted_noise(len(x), tilt_db_per_octave, noise_rms, rng)
    peak = np.max(np.abs(x))
    if peak > PEAK_TARGET:
        x = x * (PEAK_TARGET / peak)
    return AudioBuffer(x, SAMPLE_RATE)


def _speaker_severity(is_positive: bool, rng: np.random.Generator) -> float:
    if is_positive:
        return float(rng.uniform(0.5 + SEVERITY_MARGIN, 1.0))
    return float(rng.uniform(0.0, 0.5 - SEVERITY_MARGIN))


def _ratings(severity: float, rng: np.random.Generator) -> dict:
    mmse = float(np.clip(30.0 - 22.0 * severity + rng.normal(0.0, 0.5), 0.0, 30.0))
    cdr_grid = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    cdr_cont = 3.0 * max(0.0, severity - 0.3) / 0.7
    cdr = float(cdr_grid[np.argmin(np.abs(cdr_grid - cdr_cont))])
    cdr_sob = float(np.clip(18.0 * max(0.0, severity - 0.3) / 0.7
                            + rng.normal(0.0, 0.3), 0.0, 18.0))
    return {"mmse": round(mmse, 2), "cdr": cdr, "cdr_sob": round(cdr_sob, 2)}


def generate_corpus(spec: SyntheticCorpusSpec, out_dir) -> Path:
    """Write WAV files plus a manifest; byte-identical for equal (spec, seed)."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    vocab = VOCAB_CHARS[:spec.vocab_size]
    freqs = tone_frequencies(spec.vocab_size)

    records = []
    for spk in range(spec.n_speakers):
        speaker_id = f"spk{spk:03d}"
        label = 1 if spk < spec.positives else 0
        severity = _speaker_severity(label == 1, rng)
        tilt = (severity - 0.5) * spec.class_separation_db
        scores = _ratings(severity, rng)
        for u in range(spec.utterances_per_speaker):
            n_words = int(rng.integers(spec.min_words, spec.max_words + 1))
            transcript = "".join(vocab[i] for i in rng.integers(0, spec.vocab_size,
                                                                size=n_words))
            audio = synthesize_utterance(transcript, vocab, freqs, tilt, rng,
                                         spec.noise_floor_db)
            utt_id = f"{speaker_id}_u{u:02d}"
            wav_name = f"wav/{utt_id}.wav"
            (out_dir / wav_name).write_bytes(encode_wav(audio))
            records.append(UtteranceRecord(id=utt_id, wav=wav_name,
                                           transcript=transcript,
                                           speaker=speaker_id, label=label,
                                           scores=dict(scores)))
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(records, manifest_path)
    return manifest_path
