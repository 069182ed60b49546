"""Experiment configuration: one JSON file drives the whole pipeline.

The config round-trips load -> save -> load identically (defaults are
materialized on load), and every output artifact records the hash of the
path-independent part, so reports from different working directories stay
byte-comparable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .audio import DspConfig
from .errors import ConfigError
from .synth import SyntheticCorpusSpec
from .asr.model import AsrConfig, desk_asr_config, paper_asr_config
from .transfer import HeadConfig

PRESETS = ("desk", "paper")
RECIPES = ("transfer", "scratch", "svm", "constant")


@dataclass
class TrainSection:
    asr_epochs: int = 200
    asr_stop_cer: Optional[float] = None
    finetune_epochs: int = 40
    augment_multiplier: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CvSection:
    k: int = 5
    n_boot: int = 2000

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PathsSection:
    corpus_dir: str = "corpus"
    manifest: str = "corpus/manifest.jsonl"
    dev_manifest: Optional[str] = None
    checkpoint_dir: str = "ckpt"
    report: str = "reports/eval_report.json"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentConfig:
    preset: str = "desk"
    seed: int = 0
    recipe: str = "transfer"
    freeze: str = "HL"  # L | HL | none
    dsp: DspConfig = field(default_factory=DspConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    synth: SyntheticCorpusSpec = field(default_factory=SyntheticCorpusSpec)
    train: TrainSection = field(default_factory=TrainSection)
    cv: CvSection = field(default_factory=CvSection)
    paths: PathsSection = field(default_factory=PathsSection)
    hidden_override: Optional[int] = None  # overrides the preset encoder width

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {self.recipe!r}")

    def asr_config(self, vocab_size: int) -> AsrConfig:
        cfg = (desk_asr_config(vocab_size, self.dsp.n_mels) if self.preset == "desk"
               else paper_asr_config(vocab_size, self.dsp.n_mels))
        if self.hidden_override is not None:
            d = cfg.to_dict()
            d["hidden_per_direction"] = self.hidden_override
            cfg = AsrConfig.from_dict(d)
        return cfg

    def to_dict(self) -> dict:
        return {
            "preset": self.preset, "seed": self.seed, "recipe": self.recipe,
            "freeze": self.freeze,
            "dsp": asdict(self.dsp),
            "head": self.head.to_dict(),
            "synth": self.synth.to_dict(),
            "train": self.train.to_dict(),
            "cv": self.cv.to_dict(),
            "paths": self.paths.to_dict(),
            "hidden_override": self.hidden_override,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            return cls(
                preset=d.get("preset", "desk"),
                seed=d.get("seed", 0),
                recipe=d.get("recipe", "transfer"),
                freeze=d.get("freeze", "HL"),
                dsp=DspConfig(**d.get("dsp", {})),
                head=HeadConfig.from_dict(d.get("head", {})),
                synth=SyntheticCorpusSpec.from_dict(d.get("synth", {})),
                train=TrainSection(**d.get("train", {})),
                cv=CvSection(**d.get("cv", {})),
                paths=PathsSection(**d.get("paths", {})),
                hidden_override=d.get("hidden_override"),
            )
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc

    def config_hash(self) -> str:
        """Hash of the semantic config; paths excluded so the hash is
        stable across working directories."""
        d = self.to_dict()
        d.pop("paths")
        canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2)
                              + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
        return cls.from_dict(data)
