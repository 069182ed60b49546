"""Encoder-decoder ASR model: VGG frontend, bidirectional LSTM stack,
location-aware attention, LSTM decoder, greedy decoding.

The encoder halves the time axis twice (U = ceil(ceil(T/2)/2)) and the mel
axis likewise; flattened channels feed the recurrent stack. Attention
scores convolve the previous alignment so the decoder tracks its position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..audio import FeatureMatrix
from ..errors import InvalidTargetError, ShapeError, TooShortError
from ..nn import tensor as T
from ..nn.params import Model, ParamGroup, uniform_param
from .tokenizer import EOS, SOS


@dataclass(frozen=True)
class AttentionConfig:
    conv_channels: int = 4
    conv_kernel: int = 7
    score_dim: int = 32

    def to_dict(self) -> dict:
        return {"conv_channels": self.conv_channels, "conv_kernel": self.conv_kernel,
                "score_dim": self.score_dim}


@dataclass(frozen=True)
class AsrConfig:
    """Architecture sizes; the desk preset is small enough to train on a CPU
    in seconds per epoch, the paper preset records the production scale."""

    vocab_size: int
    n_mels: int = 80
    n_blstm_layers: int = 4
    hidden_per_direction: int = 32
    decoder_layers: int = 2
    decoder_hidden: int = 32
    embed_dim: int = 32
    conv_channels: tuple[int, int] = (8, 16)
    attention: AttentionConfig = field(default_factory=AttentionConfig)

    def __post_init__(self):
        counts = (self.vocab_size, self.n_mels, self.n_blstm_layers,
                  self.hidden_per_direction, self.decoder_layers,
                  self.decoder_hidden, self.embed_dim,
                  self.conv_channels[0], self.conv_channels[1],
                  self.attention.conv_channels, self.attention.conv_kernel,
                  self.attention.score_dim)
        if any(c < 1 for c in counts):
            raise ValueError("all AsrConfig counts must be >= 1")
        if self.decoder_layers != 2:
            raise ValueError("decoder is a fixed two-layer LSTM stack")

    @property
    def encoder_width(self) -> int:
        return 2 * self.hidden_per_direction

    @property
    def pooled_mels(self) -> int:
        return math.ceil(math.ceil(self.n_mels / 2) / 2)

    @property
    def blstm_input_dim(self) -> int:
        return self.conv_channels[1] * self.pooled_mels

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "n_mels": self.n_mels,
            "n_blstm_layers": self.n_blstm_layers,
            "hidden_per_direction": self.hidden_per_direction,
            "decoder_layers": self.decoder_layers,
            "decoder_hidden": self.decoder_hidden, "embed_dim": self.embed_dim,
            "conv_channels": list(self.conv_channels),
            "attention": self.attention.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AsrConfig":
        d = dict(d)
        d["conv_channels"] = tuple(d["conv_channels"])
        d["attention"] = AttentionConfig(**d["attention"])
        return cls(**d)


def desk_asr_config(vocab_size: int, n_mels: int = 80) -> AsrConfig:
    return AsrConfig(vocab_size=vocab_size, n_mels=n_mels)


def paper_asr_config(vocab_size: int, n_mels: int = 80) -> AsrConfig:
    return AsrConfig(
        vocab_size=vocab_size, n_mels=n_mels,
        hidden_per_direction=1024, decoder_hidden=1024, embed_dim=1024,
        conv_channels=(64, 128),
        attention=AttentionConfig(conv_channels=10, conv_kernel=100, score_dim=320),
    )


# Fan-in-scaled uniform limits keep activations at a stable magnitude
# through the deep encoder; a fixed small limit measurably collapses the
# forward signal by the time it reaches attention.

def _relu_limit(fan_in: int) -> float:
    return math.sqrt(6.0 / fan_in)


def _recurrent_limit(hidden: int) -> float:
    return 1.0 / math.sqrt(hidden)


def _linear_limit(fan_in: int) -> float:
    return 1.0 / math.sqrt(fan_in)


def _lstm_group(name: str, d_in: int, hidden: int, rng, prefix: str = "") -> ParamGroup:
    limit = _recurrent_limit(hidden)
    tensors = {
        f"{prefix}wx": uniform_param((d_in, 4 * hidden), rng, limit),
        f"{prefix}wh": uniform_param((hidden, 4 * hidden), rng, limit),
        f"{prefix}b": uniform_param((4 * hidden,), rng, limit),
    }
    return ParamGroup(name, tensors)


def _bilstm_group(name: str, d_in: int, hidden: int, rng) -> ParamGroup:
    limit = _recurrent_limit(hidden)
    tensors = {}
    for direction in ("fwd", "bwd"):
        tensors[f"{direction}_wx"] = uniform_param((d_in, 4 * hidden), rng, limit)
        tensors[f"{direction}_wh"] = uniform_param((hidden, 4 * hidden), rng, limit)
        tensors[f"{direction}_b"] = uniform_param((4 * hidden,), rng, limit)
    return ParamGroup(name, tensors)


def _conv_group(name: str, c_in: int, c_out: int, rng) -> ParamGroup:
    limit = _relu_limit(c_in * 9)
    return ParamGroup(name, {"w": uniform_param((c_out, c_in, 3, 3), rng, limit),
                             "b": uniform_param((c_out,), rng, limit)})


def build_encoder_groups(cfg: AsrConfig, rng) -> list[ParamGroup]:
    c1, c2 = cfg.conv_channels
    hidden = cfg.hidden_per_direction
    groups = [
        _conv_group("encoder.vgg.conv1", 3, c1, rng),
        _conv_group("encoder.vgg.conv2", c1, c1, rng),
        _conv_group("encoder.vgg.conv3", c1, c2, rng),
        _conv_group("encoder.vgg.conv4", c2, c2, rng),
    ]
    d_in = cfg.blstm_input_dim
    for layer in range(1, cfg.n_blstm_layers + 1):
        groups.append(_bilstm_group(f"encoder.blstm.layer{layer}", d_in, hidden, rng))
        d_in = 2 * hidden
    return groups


def build_asr_model(cfg: AsrConfig, seed: int) -> Model:
    rng = np.random.default_rng(seed)
    groups = build_encoder_groups(cfg, rng)
    att = cfg.attention
    groups.append(ParamGroup("attention.location", {
        "ws": uniform_param((cfg.decoder_hidden, att.score_dim), rng,
                            _linear_limit(cfg.decoder_hidden)),
        "vh": uniform_param((cfg.encoder_width, att.score_dim), rng,
                            _linear_limit(cfg.encoder_width)),
        "uf": uniform_param((att.conv_channels, att.score_dim), rng,
                            _linear_limit(att.conv_channels)),
        "b": uniform_param((att.score_dim,), rng, _linear_limit(att.score_dim)),
        "w": uniform_param((att.score_dim, 1), rng, _linear_limit(att.score_dim)),
        "conv_w": uniform_param((att.conv_channels, att.conv_kernel), rng,
                                _linear_limit(att.conv_kernel)),
    }))
    groups.append(ParamGroup("decoder.embed", {
        "table": uniform_param((cfg.vocab_size, cfg.embed_dim), rng,
                               _linear_limit(cfg.embed_dim))}))
    groups.append(_lstm_group("decoder.lstm1", cfg.embed_dim + cfg.encoder_width,
                              cfg.decoder_hidden, rng))
    groups.append(_lstm_group("decoder.lstm2", cfg.decoder_hidden,
                              cfg.decoder_hidden, rng))
    out_in = cfg.decoder_hidden + cfg.encoder_width
    groups.append(ParamGroup("decoder.output", {
        "w": uniform_param((out_in, cfg.vocab_size), rng, _linear_limit(out_in)),
        "b": uniform_param((cfg.vocab_size,), rng, _linear_limit(out_in))}))
    return Model(groups, meta={"kind": "asr", "asr_config": cfg.to_dict()})


def model_asr_config(model: Model) -> AsrConfig:
    return AsrConfig.from_dict(model.meta["asr_config"])


def encoder_length(t_frames: int) -> int:
    return math.ceil(math.ceil(t_frames / 2) / 2)


def encode(features, model: Model, cfg: AsrConfig | None = None) -> T.Tensor:
    """Run the VGG + BiLSTM encoder; returns a [U, 2H] tensor."""
    if cfg is None:
        cfg = model_asr_config(model)
    frames = features.frames if isinstance(features, FeatureMatrix) else np.asarray(features)
    t_len, dim = frames.shape
    if t_len < 4:
        raise TooShortError(f"encoder needs at least 4 frames, got {t_len}")
    if dim != 3 * cfg.n_mels:
        raise ShapeError(f"expected {3 * cfg.n_mels} feature columns, got {dim}")

    x3 = frames.astype(np.float32).reshape(t_len, 3, cfg.n_mels).transpose(1, 0, 2)
    x = T.Tensor(x3)

    def conv(name, inp):
        group = model.group(name)
        return T.relu(T.conv2d(inp, group.tensors["w"], group.tensors["b"],
                               stride=1, padding=(1, 1)))

    h = conv("encoder.vgg.conv1", x)
    h = conv("encoder.vgg.conv2", h)
    h = T.maxpool2d(h, 2)
    h = conv("encoder.vgg.conv3", h)
    h = conv("encoder.vgg.conv4", h)
    h = T.maxpool2d(h, 2)

    channels, u_len, f_len = h.data.shape
    seq = T.reshape(T.transpose(h, (1, 0, 2)), (u_len, channels * f_len))
    for layer in range(1, cfg.n_blstm_layers + 1):
        group = model.group(f"encoder.blstm.layer{layer}")
        fwd = {k[4:]: v for k, v in group.tensors.items() if k.startswith("fwd_")}
        bwd = {k[4:]: v for k, v in group.tensors.items() if k.startswith("bwd_")}
        seq = T.bilstm_layer(seq, fwd, bwd)
    return seq


def attend(dec_state: T.Tensor, enc_out: T.Tensor, prev_align: T.Tensor,
           model: Model, enc_proj: T.Tensor | None = None) -> tuple[T.Tensor, T.Tensor]:
    """Location-aware attention step.

    Scores e_u = w . tanh(Ws s + Vh h_u + Uf f_u + b) with f the convolved
    previous alignment; returns (context [1, 2H], new alignment [U]).
    """
    u_len = enc_out.data.shape[0]
    if u_len == 0:
        raise TooShortError("cannot attend over an empty encoder output")
    att = model.group("attention.location").tensors
    if prev_align.data.shape != (u_len,):
        raise ShapeError(f"alignment length {prev_align.data.shape} != U={u_len}")
    if enc_proj is None:
        enc_proj = T.matmul(enc_out, att["vh"])
    loc = T.conv1d_same(prev_align, att["conv_w"])  # [U, C]
    scores = T.tanh(T.add(T.add(enc_proj, T.matmul(loc, att["uf"])),
                          T.add(T.matmul(dec_state, att["ws"]), att["b"])))
    energies = T.reshape(T.matmul(scores, att["w"]), (u_len,))
    align = T.softmax(energies, axis=0)
    context = T.matmul(T.reshape(align, (1, u_len)), enc_out)
    return context, align


def uniform_alignment(u_len: int, dtype=np.float32) -> T.Tensor:
    return T.Tensor(np.full(u_len, 1.0 / u_len, dtype=dtype))


def _decoder_step(model: Model, cfg: AsrConfig, token_id: int, context: T.Tensor,
                  state: list[tuple[T.Tensor, T.Tensor]]):
    emb = T.embedding(model.group("decoder.embed").tensors["table"], token_id)
    x = T.concat([emb, context], axis=1)
    new_state = []
    for idx, name in enumerate(("decoder.lstm1", "decoder.lstm2")):
        group = model.group(name).tensors
        h, c = T.lstm_step(x, state[idx][0], state[idx][1],
                           group["wx"], group["wh"], group["b"])
        new_state.append((h, c))
        x = h
    return x, new_state


def _zero_decoder_state(cfg: AsrConfig, dtype=np.float32):
    zeros = lambda: T.Tensor(np.zeros((1, cfg.decoder_hidden), dtype=dtype))
    return [(zeros(), zeros()), (zeros(), zeros())]


def decode_train(enc_out: T.Tensor, targets, model: Model,
                 cfg: AsrConfig | None = None) -> T.Tensor:
    """Teacher-forced decoder loss over target ids [sos, ..., eos]."""
    if cfg is None:
        cfg = model_asr_config(model)
    targets = list(targets)
    if len(targets) < 2:
        raise InvalidTargetError("target must contain at least sos and eos")
    if targets[0] != SOS or targets[-1] != EOS:
        raise InvalidTargetError("target must start with sos and end with eos")

    u_len = enc_out.data.shape[0]
    att = model.group("attention.location").tensors
    enc_proj = T.matmul(enc_out, att["vh"])
    align = uniform_alignment(u_len, enc_out.data.dtype)
    context = T.matmul(T.reshape(align, (1, u_len)), enc_out)
    state = _zero_decoder_state(cfg, enc_out.data.dtype)

    logits_steps = []
    for prev_token in targets[:-1]:
        s, state = _decoder_step(model, cfg, prev_token, context, state)
        context, align = attend(s, enc_out, align, model, enc_proj)
        out = model.group("decoder.output").tensors
        logits_steps.append(T.linear(T.concat([s, context], axis=1), out["w"], out["b"]))
    logits = T.concat(logits_steps, axis=0)
    return T.softmax_cross_entropy(logits, targets[1:])


def greedy_decode(enc_out: T.Tensor, model: Model, max_len: int,
                  cfg: AsrConfig | None = None) -> list[int]:
    """Argmax decoding with prediction feedback; stops at eos or max_len."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if cfg is None:
        cfg = model_asr_config(model)
    u_len = enc_out.data.shape[0]
    att = model.group("attention.location").tensors
    enc_proj = T.matmul(enc_out, att["vh"])
    align = uniform_alignment(u_len, enc_out.data.dtype)
    context = T.matmul(T.reshape(align, (1, u_len)), enc_out)
    state = _zero_decoder_state(cfg, enc_out.data.dtype)

    token = SOS
    out_ids: list[int] = []
    out = model.group("decoder.output").tensors
    for _ in range(max_len):
        s, state = _decoder_step(model, cfg, token, context, state)
        context, align = attend(s, enc_out, align, model, enc_proj)
        logits = T.linear(T.concat([s, context], axis=1), out["w"], out["b"])
        token = int(np.argmax(logits.data[0]))
        if token == EOS:
            break
        out_ids.append(token)
    return out_ids
