"""Command-line entry point.

Subcommands: synth, featurize, train-asr, finetune, eval, cer,
export-plots. Each is a thin orchestration of the library modules; exit
code 0 on success, nonzero with a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import errors
from .audio import DspConfig, decode_wav, extract_features, save_features
from .config import ExperimentConfig
from .evaluation import roc_points, run_cv
from .manifest import read_manifest
from .nn.params import load_checkpoint, save_checkpoint
from .recipes import ConstantRecipe, SvmRecipe, TransferRecipe, build_subject_samples
from .synth import generate_corpus
from .asr.metrics import cer
from .asr.train import TrainSettings, train_asr
from .transfer import FreezeSpec, extract_encoder, finetune, FinetuneSettings

logger = logging.getLogger(__name__)


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "preset", None):
        cfg.preset = args.preset
    return cfg


def _resolve(base: Path, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else base / p


def _require(path: Path, role: str) -> Path:
    if not path.exists():
        raise errors.DependencyError(f"missing {role}: {path}")
    return path


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    corpus_dir = _resolve(out, cfg.paths.corpus_dir)
    manifest = generate_corpus(cfg.synth, corpus_dir)
    print(manifest)
    return 0


def cmd_featurize(args) -> int:
    cfg = _load_config(args)
    wav = _require(Path(args.wav), "wav file")
    audio = decode_wav(wav.read_bytes())
    features = extract_features(audio, cfg.dsp)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_features(features, out_path)
    print(f"{out_path} frames={features.num_frames} dim={features.dim}")
    return 0


def cmd_train_asr(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = _require(_resolve(out, cfg.paths.manifest), "corpus manifest")
    dev = (_require(_resolve(out, cfg.paths.dev_manifest), "dev manifest")
           if cfg.paths.dev_manifest else None)
    records = read_manifest(manifest)
    from .asr.tokenizer import Tokenizer
    vocab = Tokenizer.from_texts(r.transcript for r in records).vocab_size
    settings = TrainSettings(epochs=cfg.train.asr_epochs, seed=cfg.seed,
                             stop_cer=cfg.train.asr_stop_cer)
    ckpt_dir = _resolve(out, cfg.paths.checkpoint_dir)
    result = train_asr(manifest, cfg.dsp, cfg.asr_config(vocab), settings,
                       out_dir=ckpt_dir, dev_manifest_path=dev, resume=args.resume)
    last = result.history[-1]
    print(f"{ckpt_dir / 'asr_final.ckpt'} epochs={last.epoch} "
          f"loss={last.loss:.4f} cer={last.train_cer:.4f}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = _require(_resolve(out, cfg.paths.manifest), "corpus manifest")
    ckpt_dir = _resolve(out, cfg.paths.checkpoint_dir)
    target = cfg.head.target if cfg.head.task == "regression" else None
    samples = build_subject_samples(manifest, cfg.dsp, target=target)

    if cfg.recipe == "scratch" or cfg.freeze == "none":
        from .transfer import build_scratch_encoder
        encoder = build_scratch_encoder(cfg.asr_config(vocab_size=8), cfg.seed)
        freeze = FreezeSpec("none")
    else:
        asr_ckpt = _require(ckpt_dir / "asr_final.ckpt", "ASR checkpoint")
        asr_model, _ = load_checkpoint(asr_ckpt)
        encoder = extract_encoder(asr_model)
        freeze = FreezeSpec(cfg.freeze)

    settings = FinetuneSettings(epochs=cfg.train.finetune_epochs, seed=cfg.seed)
    result = finetune(samples, encoder, freeze, cfg.head, settings)
    result.model.meta["freeze_variant"] = freeze.variant
    result.model.meta["config_hash"] = cfg.config_hash()
    head_path = ckpt_dir / "head.ckpt"
    head_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, head_path)
    print(f"{head_path} final_loss={result.losses[-1]:.4f}")
    return 0


def _build_recipe(cfg: ExperimentConfig, out: Path):
    task = cfg.head.task
    if cfg.recipe == "constant":
        return ConstantRecipe(task=task)
    if cfg.recipe == "svm":
        return SvmRecipe(task=task)
    if cfg.recipe == "scratch":
        manifest = _resolve(out, cfg.paths.manifest)
        records = read_manifest(manifest)
        from .asr.tokenizer import Tokenizer
        vocab = Tokenizer.from_texts(r.transcript for r in records).vocab_size
        return TransferRecipe(task=task, head=cfg.head, freeze=FreezeSpec("none"),
                              asr_config=cfg.asr_config(vocab),
                              epochs=cfg.train.finetune_epochs, dsp=cfg.dsp,
                              augment_multiplier=cfg.train.augment_multiplier,
                              name="from-scratch")
    ckpt = _require(_resolve(out, cfg.paths.checkpoint_dir) / "asr_final.ckpt",
                    "ASR checkpoint")
    asr_model, _ = load_checkpoint(ckpt)
    encoder = extract_encoder(asr_model)
    return TransferRecipe(task=task, head=cfg.head, freeze=FreezeSpec(cfg.freeze),
                          encoder=encoder, epochs=cfg.train.finetune_epochs,
                          dsp=cfg.dsp,
                          augment_multiplier=cfg.train.augment_multiplier,
                          name=f"transfer -{cfg.freeze}")


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = _require(_resolve(out, cfg.paths.manifest), "corpus manifest")
    target = cfg.head.target if cfg.head.task == "regression" else None
    keep_audio = cfg.head.task == "regression" and cfg.train.augment_multiplier > 0
    samples = build_subject_samples(manifest, cfg.dsp, target=target,
                                    keep_audio=keep_audio)
    recipe = _build_recipe(cfg, out)
    report = run_cv(samples, recipe, k=cfg.cv.k, seed=cfg.seed,
                    n_boot=cfg.cv.n_boot, config_hash=cfg.config_hash(),
                    threshold=cfg.head.threshold)
    report_path = _resolve(out, cfg.paths.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json(), encoding="utf-8")
    print(report.summary_table(), end="")
    print(report_path)
    return 0


def cmd_cer(args) -> int:
    ref = _require(Path(args.ref), "reference file").read_text(encoding="utf-8").strip()
    hyp = _require(Path(args.hyp), "hypothesis file").read_text(encoding="utf-8").strip()
    print(f"{cer(ref, hyp):.4f}")
    return 0


def cmd_export_plots(args) -> int:
    report_path = _require(Path(args.report), "eval report")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if report["task"] == "classification":
        labels = [p["label"] for p in report["predictions"]]
        probs = [p["prob"] for p in report["predictions"]]
        fpr, tpr = roc_points(labels, probs)
        with open(out_dir / "roc.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            writer.writerows(zip(fpr, tpr))
        print(out_dir / "roc.csv")
    else:
        with open(out_dir / "scatter.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["target", "prediction"])
            for p in report["predictions"]:
                writer.writerow([p["score"], p["prediction"]])
        print(out_dir / "scatter.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogspeech",
        description="Seq2seq ASR with encoder transfer to dementia screening")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default="."):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--preset", choices=("desk", "paper"), default=None)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="extract features from one wav")
    common(p)
    p.add_argument("--wav", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train-asr", help="train the seq2seq recognizer")
    common(p)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train_asr)

    p = sub.add_parser("finetune", help="fit a transfer head on all subjects")
    common(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="cross-validated evaluation report")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cer", help="character error rate between two text files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.set_defaults(func=cmd_cer)

    p = sub.add_parser("export-plots", help="CSV plot data from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_export_plots)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except errors.DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
