"""Waveform augmentations for the regression training split.

Four transforms: white-noise addition at a target SNR, zero-filled time
shifting, phase-vocoder time stretching, and pitch shifting (stretch plus
linear resample). All are pure functions of (input, params, seed); outputs
keep the input sample rate and stay inside [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .audio import AudioBuffer
from .errors import InvalidParameterError, ZeroPowerError

STFT_SIZE = 1024
STFT_HOP = 256


@dataclass(frozen=True)
class AugmentSpec:
    """One augmentation draw; only the parameters of `kind` are meaningful."""

    kind: str  # noise | time_shift | time_stretch | pitch_shift
    snr_db: Optional[float] = None
    shift_ms: Optional[float] = None
    rate: Optional[float] = None
    semitones: Optional[float] = None
    seed: int = 0

    KINDS = ("noise", "time_shift", "time_stretch", "pitch_shift")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError(f"unknown augmentation kind {self.kind!r}")
        if self.kind == "noise" and (self.snr_db is None or not np.isfinite(self.snr_db)):
            raise InvalidParameterError("noise augmentation needs a finite snr_db")
        if self.kind == "time_shift" and self.shift_ms is None:
            raise InvalidParameterError("time_shift augmentation needs shift_ms")
        if self.kind == "time_stretch" and (self.rate is None or self.rate <= 0):
            raise InvalidParameterError("time_stretch augmentation needs rate > 0")
        if self.kind == "pitch_shift" and self.semitones is None:
            raise InvalidParameterError("pitch_shift augmentation needs semitones")

    def apply(self, audio: AudioBuffer) -> AudioBuffer:
        if self.kind == "noise":
            return add_noise(audio, self.snr_db, self.seed)
        if self.kind == "time_shift":
            return time_shift(audio, self.shift_ms)
        if self.kind == "time_stretch":
            return time_stretch(audio, self.rate)
        return pitch_shift(audio, self.semitones)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed}
        for field in ("snr_db", "shift_ms", "rate", "semitones"):
            value = getattr(self, field)
            if value is not None:
                out[field] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        return cls(**d)


def add_noise(audio: AudioBuffer, snr_db: float, seed: int) -> AudioBuffer:
    """Add white Gaussian noise so the realized SNR equals snr_db.

    The noise draw is scaled by its own measured power, so the SNR is exact
    up to the final clip to [-1, 1].
    """
    x = audio.samples
    signal_power = float(np.mean(x**2)) if len(x) else 0.0
    if signal_power <= 0.0:
        raise ZeroPowerError("cannot target an SNR against a zero-power signal")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(x))
    noise_power = float(np.mean(noise**2))
    target_power = signal_power * 10.0 ** (-snr_db / 10.0)
    noise *= np.sqrt(target_power / noise_power)
    return AudioBuffer(np.clip(x + noise, -1.0, 1.0), audio.sample_rate_hz)


def time_shift(audio: AudioBuffer, shift_ms: float) -> AudioBuffer:
    """Shift samples by shift_ms, zero-filling the vacated region."""
    n = len(audio)
    shift = int(round(shift_ms * audio.sample_rate_hz / 1000.0))
    if abs(shift) >= n:
        raise InvalidParameterError(
            f"|shift| of {abs(shift)} samples >= duration of {n} samples")
    out = np.zeros(n)
    if shift >= 0:
        out[shift:] = audio.samples[:n - shift]
    else:
        out[:n + shift] = audio.samples[-shift:]
    return AudioBuffer(out, audio.sample_rate_hz)


def time_stretch(audio: AudioBuffer, rate: float) -> AudioBuffer:
    """Phase-vocoder time stretch: output length round(len/rate), pitch kept."""
    if not 0.5 <= rate <= 2.0:
        raise InvalidParameterError(f"stretch rate {rate} outside [0.5, 2.0]")
    n = len(audio)
    target_len = int(round(n / rate))
    stretched = _phase_vocoder(audio.samples, rate)
    if len(stretched) < target_len:
        stretched = np.concatenate([stretched, np.zeros(target_len - len(stretched))])
    else:
        stretched = stretched[:target_len]
    return AudioBuffer(np.clip(stretched, -1.0, 1.0), audio.sample_rate_hz)


def pitch_shift(audio: AudioBuffer, semitones: float) -> AudioBuffer:
    """Move frequencies by 2^(semitones/12) without changing duration.

    Stretch to len*k with the vocoder (pitch preserved), then resample back
    to the original length, which multiplies frequencies by k.
    """
    if abs(semitones) > 12:
        raise InvalidParameterError(f"|semitones| of {abs(semitones)} exceeds 12")
    n = len(audio)
    k = 2.0 ** (semitones / 12.0)
    if abs(semitones) < 1e-9:
        return AudioBuffer(audio.samples.copy(), audio.sample_rate_hz)
    stretched = time_stretch(audio, 1.0 / k).samples
    positions = np.arange(n) * (len(stretched) - 1) / max(n - 1, 1)
    lo = np.floor(positions).astype(int)
    hi = np.minimum(lo + 1, len(stretched) - 1)
    frac = positions - lo
    out = stretched[lo] * (1.0 - frac) + stretched[hi] * frac
    return AudioBuffer(np.clip(out, -1.0, 1.0), audio.sample_rate_hz)


def _stft(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    n_frames = max(1 + (len(x) - STFT_SIZE) // STFT_HOP, 1)
    pad_len = (n_frames - 1) * STFT_HOP + STFT_SIZE
    if pad_len > len(x):
        x = np.concatenate([x, np.zeros(pad_len - len(x))])
    idx = np.arange(STFT_SIZE)[None, :] + STFT_HOP * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * window, axis=1)


def _istft(frames: np.ndarray, window: np.ndarray) -> np.ndarray:
    n_frames = frames.shape[0]
    out_len = (n_frames - 1) * STFT_HOP + STFT_SIZE
    out = np.zeros(out_len)
    wsum = np.zeros(out_len)
    chunks = np.fft.irfft(frames, n=STFT_SIZE, axis=1) * window
    for i in range(n_frames):
        start = i * STFT_HOP
        out[start:start + STFT_SIZE] += chunks[i]
        wsum[start:start + STFT_SIZE] += window**2
    return out / np.maximum(wsum, 1e-8)


def _phase_vocoder(x: np.ndarray, rate: float) -> np.ndarray:
    """Resynthesize x at 1/rate of its length with per-bin phase propagation."""
    window = np.hanning(STFT_SIZE)
    spec = _stft(x, window)
    n_frames, n_bins = spec.shape
    steps = np.arange(0.0, n_frames, rate)
    omega = 2.0 * np.pi * np.arange(n_bins) * STFT_HOP / STFT_SIZE

    out = np.zeros((len(steps), n_bins), dtype=complex)
    phase = np.angle(spec[0])
    padded = np.concatenate([spec, np.zeros((1, n_bins), dtype=complex)], axis=0)
    for i, step in enumerate(steps):
        left = int(np.floor(step))
        frac = step - left
        mag = (1.0 - frac) * np.abs(padded[left]) + frac * np.abs(padded[left + 1])
        out[i] = mag * np.exp(1j * phase)
        dphase = np.angle(padded[left + 1]) - np.angle(padded[left]) - omega
        dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
        phase = phase + omega + dphase
    return _istft(out, window)
