"""WAV decoding, framing, and log-mel filter bank features with deltas.

Everything here is a pure function of its inputs; feature extraction for
distinct utterances can run concurrently.
"""

from __future__ import annotations

import io
import struct
import wave
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError, TooShortError, UnsupportedFormatError

FEATURE_MAGIC = b"CSFT"


@dataclass(frozen=True)
class AudioBuffer:
    """Mono PCM audio, samples normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"audio must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise FormatError("audio contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise FormatError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class DspConfig:
    """Framing and filter-bank settings.

    Defaults follow common large-vocabulary ASR practice: 25 ms windows,
    10 ms hop, 80 mel bands over 20-7600 Hz, 512-point FFT, delta window 2.
    """

    frame_length_ms: float = 25.0
    frame_hop_ms: float = 10.0
    n_mels: int = 80
    fft_size: int = 512
    mel_low_hz: float = 20.0
    mel_high_hz: float = 7600.0
    log_floor: float = 1e-10
    delta_window: int = 2
    preemphasis: float = 0.97
    mean_variance_normalize: bool = False

    def __post_init__(self):
        if self.frame_length_ms < self.frame_hop_ms:
            raise ValueError("frame_length_ms must be >= frame_hop_ms")
        if not self.mel_low_hz < self.mel_high_hz:
            raise ValueError("mel_low_hz must be < mel_high_hz")
        if self.n_mels < 1 or self.fft_size < 1 or self.delta_window < 1:
            raise ValueError("n_mels, fft_size, delta_window must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def frame_length(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_length_ms * sample_rate_hz / 1000.0))

    def frame_hop(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_hop_ms * sample_rate_hz / 1000.0))


@dataclass(frozen=True)
class FeatureMatrix:
    """T x D per-frame features, columns ordered [fbank | delta | delta-delta]."""

    frames: np.ndarray
    frame_hop_ms: float
    frame_length_ms: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {frames.shape}")
        if frames.size and not np.all(np.isfinite(frames)):
            raise FormatError("feature matrix contains non-finite entries")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_frames * self.frame_hop_ms / 1000.0


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode a RIFF/WAVE byte string into an AudioBuffer.

    Only 16-bit PCM mono is accepted; anything else raises rather than
    resampling or downmixing silently.
    """
    try:
        with wave.open(io.BytesIO(data), "rb") as wf:
            n_channels = wf.getnchannels()
            sample_width = wf.getsampwidth()
            sample_rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError, struct.error) as exc:
        raise FormatError(f"not a decodable RIFF/WAVE file: {exc}") from exc
    if n_channels != 1:
        raise UnsupportedFormatError(f"expected mono audio, got {n_channels} channels")
    if sample_width != 2:
        raise UnsupportedFormatError(f"expected 16-bit PCM, got {8 * sample_width}-bit")
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(ints.astype(np.float64) / 32768.0, sample_rate)


def encode_wav(audio: AudioBuffer) -> bytes:
    """Serialize an AudioBuffer as 16-bit PCM mono WAV bytes."""
    clipped = np.clip(audio.samples, -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate_hz)
        wf.writeframes(ints.tobytes())
    return buf.getvalue()


def frame_count(num_samples: int, frame_len: int, hop: int) -> int:
    """Number of full frames: floor((num_samples - frame_len) / hop) + 1."""
    if num_samples < frame_len:
        return 0
    return (num_samples - frame_len) // hop + 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate_hz: int,
                   low_hz: float, high_hz: float) -> np.ndarray:
    """Triangular mel filters as an (n_mels, fft_size//2 + 1) matrix."""
    if high_hz > sample_rate_hz / 2:
        raise ValueError("mel_high_hz above Nyquist")
    n_bins = fft_size // 2 + 1
    mel_points = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * sample_rate_hz / fft_size
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_filter_centers_hz(cfg: DspConfig) -> np.ndarray:
    """Center frequency of each mel filter, in Hz."""
    mel_points = np.linspace(hz_to_mel(cfg.mel_low_hz), hz_to_mel(cfg.mel_high_hz),
                             cfg.n_mels + 2)
    return mel_to_hz(mel_points[1:-1])


def log_mel_fbank(audio: AudioBuffer, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Log-mel filter bank energies, one row per frame.

    Per frame: pre-emphasis, Hamming window, magnitude spectrum, triangular
    mel filters, natural log with a floor so silence stays finite.
    """
    sr = audio.sample_rate_hz
    frame_len = cfg.frame_length(sr)
    hop = cfg.frame_hop(sr)
    if frame_len > cfg.fft_size:
        raise ValueError(f"frame length {frame_len} exceeds fft_size {cfg.fft_size}")
    n_frames = frame_count(len(audio), frame_len, hop)
    if n_frames == 0:
        raise TooShortError(
            f"audio has {len(audio)} samples, shorter than one {frame_len}-sample frame")

    x = audio.samples
    emph = np.concatenate(([x[0]], x[1:] - cfg.preemphasis * x[:-1]))
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = emph[idx] * np.hamming(frame_len)
    spectrum = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1))
    fb = mel_filterbank(cfg.n_mels, cfg.fft_size, sr, cfg.mel_low_hz, cfg.mel_high_hz)
    energies = spectrum @ fb.T
    feats = np.log(np.maximum(energies, cfg.log_floor))
    if cfg.mean_variance_normalize:
        mu = feats.mean(axis=0)
        sd = feats.std(axis=0)
        feats = (feats - mu) / np.where(sd > 1e-8, sd, 1.0)
    return feats


def append_deltas(fbank: np.ndarray, cfg: DspConfig = DspConfig()) -> FeatureMatrix:
    """Append delta and delta-delta regression coefficients.

    delta_t = sum_{n=1..N} n * (x_{t+n} - x_{t-n}) / (2 * sum n^2), with the
    boundary frames replicated so T is unchanged.
    """
    fbank = np.asarray(fbank, dtype=np.float64)
    if fbank.ndim != 2 or fbank.shape[0] < 1:
        raise TooShortError("need at least one frame to append deltas")
    d1 = _delta(fbank, cfg.delta_window)
    d2 = _delta(d1, cfg.delta_window)
    frames = np.concatenate([fbank, d1, d2], axis=1)
    return FeatureMatrix(frames, cfg.frame_hop_ms, cfg.frame_length_ms)


def _delta(x: np.ndarray, window: int) -> np.ndarray:
    n = np.arange(1, window + 1)
    denom = 2.0 * np.sum(n**2)
    padded = np.concatenate([np.repeat(x[:1], window, axis=0), x,
                             np.repeat(x[-1:], window, axis=0)], axis=0)
    out = np.zeros_like(x)
    T = x.shape[0]
    for k in n:
        out += k * (padded[window + k:window + k + T] - padded[window - k:window - k + T])
    return out / denom


def extract_features(audio: AudioBuffer, cfg: DspConfig = DspConfig()) -> FeatureMatrix:
    """Full front end: log-mel fbank plus deltas and delta-deltas."""
    return append_deltas(log_mel_fbank(audio, cfg), cfg)


def save_features(features: FeatureMatrix, path) -> None:
    """Write the binary feature container: magic, T, D, f32 LE row-major."""
    frames = features.frames.astype("<f4")
    header = struct.pack("<4sIIff", FEATURE_MAGIC, frames.shape[0], frames.shape[1],
                         features.frame_hop_ms, features.frame_length_ms)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frames.tobytes())


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIIff"))
        if len(header) < struct.calcsize("<4sIIff"):
            raise FormatError("feature file truncated")
        magic, t, d, hop_ms, len_ms = struct.unpack("<4sIIff", header)
        if magic != FEATURE_MAGIC:
            raise FormatError(f"bad feature-file magic {magic!r}")
        payload = fh.read(4 * t * d)
    if len(payload) != 4 * t * d:
        raise FormatError("feature payload truncated")
    frames = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    return FeatureMatrix(frames, hop_ms, len_ms)
