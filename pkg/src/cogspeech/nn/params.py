"""Named parameter groups, trainability control, and checkpoint IO.

A Model is an ordered collection of ParamGroups with hierarchical names
(encoder.vgg.conv1, encoder.blstm.layer3, head.linear, ...); freezing
schedules act on whole groups. Checkpoints are a versioned binary blob:
magic, version, a JSON header describing groups/shapes/metadata, then raw
little-endian f32 payloads (and optimizer accumulators when present).
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, Iterator, Optional

import numpy as np

from ..errors import CheckpointError, ConfigError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"CSCK"
CHECKPOINT_VERSION = 1


class ParamGroup:
    """A named set of parameter tensors frozen or trained as a unit."""

    def __init__(self, name: str, tensors: dict[str, Tensor], trainable: bool = True):
        self.name = name
        self.tensors = dict(tensors)
        self.trainable = trainable

    def __repr__(self):
        return f"ParamGroup({self.name!r}, trainable={self.trainable})"


class Model:
    """Ordered ParamGroups plus free-form metadata (architecture config)."""

    def __init__(self, groups: Iterable[ParamGroup], meta: Optional[dict] = None):
        self.groups: dict[str, ParamGroup] = {}
        for group in groups:
            if group.name in self.groups:
                raise ConfigError(f"duplicate parameter group {group.name!r}")
            self.groups[group.name] = group
        self.meta = dict(meta or {})

    def group(self, name: str) -> ParamGroup:
        try:
            return self.groups[name]
        except KeyError:
            raise ConfigError(f"unknown parameter group {name!r}") from None

    def named_tensors(self) -> Iterator[tuple[str, str, Tensor]]:
        for group in self.groups.values():
            for tname, tensor in group.tensors.items():
                yield group.name, tname, tensor

    def zero_grad(self):
        for _, _, tensor in self.named_tensors():
            tensor.grad = None

    def trainable_names(self) -> list[str]:
        return [g.name for g in self.groups.values() if g.trainable]

    def num_parameters(self) -> int:
        return sum(t.data.size for _, _, t in self.named_tensors())


def uniform_param(shape, rng: np.random.Generator, scale: float = 0.1) -> Tensor:
    """Uniform(-scale, scale) float32 parameter tensor."""
    data = rng.uniform(-scale, scale, size=shape).astype(np.float32)
    return Tensor(data, requires_grad=True)


def set_trainable(model: Model, trainable_groups: Iterable[str]) -> None:
    """Make exactly the named groups trainable; freeze everything else."""
    names = set(trainable_groups)
    unknown = names - set(model.groups)
    if unknown:
        raise ConfigError(f"unknown parameter group(s): {sorted(unknown)}")
    for group in model.groups.values():
        group.trainable = group.name in names


def zero_frozen_grads(model: Model) -> None:
    """Frozen groups contribute no update: force their gradients to zero."""
    for group in model.groups.values():
        if not group.trainable:
            for tensor in group.tensors.values():
                if tensor.grad is not None:
                    tensor.grad = np.zeros_like(tensor.data)


def save_checkpoint(model: Model, path, opt_state=None) -> None:
    entries = []
    payloads = []
    for gname, tname, tensor in model.named_tensors():
        entries.append({"group": gname, "tensor": tname,
                        "shape": list(tensor.data.shape)})
        payloads.append(tensor.data.astype("<f4").tobytes())
    header = {
        "version": CHECKPOINT_VERSION,
        "meta": model.meta,
        "entries": entries,
        "trainable": sorted(model.trainable_names()),
        "opt": None,
    }
    if opt_state is not None:
        header["opt"] = {"rho": opt_state.rho, "eps": opt_state.eps}
        for gname, tname, tensor in model.named_tensors():
            key = f"{gname}/{tname}"
            payloads.append(opt_state.accum_grad_sq[key].astype("<f4").tobytes())
            payloads.append(opt_state.accum_update_sq[key].astype("<f4").tobytes())
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path):
    """Read a checkpoint; returns (Model, AdaDeltaState | None)."""
    from .optim import AdaDeltaState  # local import to avoid a cycle

    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise CheckpointError(f"bad checkpoint magic {magic!r} in {path}")
            version, header_len = struct.unpack("<II", fh.read(8))
            if version != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {version}")
            header = json.loads(fh.read(header_len).decode("utf-8"))
            blob = fh.read()
    except (OSError, struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc

    offset = 0

    def take(shape) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(blob):
            raise CheckpointError(f"checkpoint payload truncated in {path}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += nbytes
        return arr.reshape(shape).copy()

    groups: dict[str, ParamGroup] = {}
    for entry in header["entries"]:
        gname, tname, shape = entry["group"], entry["tensor"], entry["shape"]
        tensor = Tensor(take(shape), requires_grad=True)
        groups.setdefault(gname, ParamGroup(gname, {})).tensors[tname] = tensor
    model = Model(groups.values(), meta=header.get("meta", {}))
    trainable = set(header.get("trainable", list(model.groups)))
    for group in model.groups.values():
        group.trainable = group.name in trainable

    opt_state = None
    if header.get("opt"):
        opt_state = AdaDeltaState.for_model(model, rho=header["opt"]["rho"],
                                            eps=header["opt"]["eps"])
        for gname, tname, tensor in model.named_tensors():
            key = f"{gname}/{tname}"
            opt_state.accum_grad_sq[key] = take(tensor.data.shape)
            opt_state.accum_update_sq[key] = take(tensor.data.shape)
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes in {path}")
    return model, opt_state


def assert_same_structure(model: Model, reference: Model) -> None:
    """Validate exact name/shape agreement between two models."""
    ours = {(g, t): tensor.data.shape for g, t, tensor in model.named_tensors()}
    theirs = {(g, t): tensor.data.shape for g, t, tensor in reference.named_tensors()}
    if ours.keys() != theirs.keys():
        missing = sorted(set(theirs) - set(ours))
        extra = sorted(set(ours) - set(theirs))
        raise CheckpointError(f"parameter name mismatch: missing={missing} extra={extra}")
    for key, shape in ours.items():
        if shape != theirs[key]:
            raise CheckpointError(f"shape mismatch for {key}: {shape} vs {theirs[key]}")
