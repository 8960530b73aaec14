"""Command-line driver.

Commands: mix, train, enhance, evaluate. A single JSON config document is
the canonical run record; a handful of flags override individual keys.
Exit codes: 0 ok, 2 config error, 3 data error, 4 stage-sequencing error.
Set WEAKDNS_LOG={error,info,debug} to control verbosity.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dsp import StftConfig
from .errors import ConfigError, DataError, DomainError, SequencingError
from .losses import LossConfig
from .mixer import CorpusSpec, build_corpus, dataset_digest, load_dataset
from .trainer import (
    ProtocolSpec,
    Trainer,
    TrainerConfig,
    enhance_waveform,
    evaluate_records,
    load_models,
    select_model,
    write_report,
)
from .wavio import read_wav, write_wav

log = logging.getLogger("weakdns")

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out_dir": "runs/out",
    "stft": {"frame_len": 384, "hop": 192, "fft_size": 512},
    "loss": {"alpha": 0.9, "beta": 0.9},
    "protocol": "1-1-50",
    "minibatch": 3,
    "checkpoint_every": 39,
    "optimizer": {"lr_denoiser": 1e-4, "lr_quality": 1e-4},
    "mix": {
        "manifest": "",
        "dataset_dir": "",
        "snr_lo": 0.0,
        "snr_hi": 10.0,
        "reverb_fraction": 0.5,
    },
    "train": {
        "train_dataset": "",
        "val_dataset": "",
        "pretrain_denoiser_epochs": 3,
        "pretrain_quality_epochs": 6,
        "stage1_denoiser_epochs": 1,
        "stage1_quality_epochs": 2,
        "stage2_cycles": 4,
    },
}


def _merge_strict(defaults: dict, given: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}' must be an object")
            out[key] = _merge_strict(defaults[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        given = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(given, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    return _merge_strict(DEFAULT_CONFIG, given)


def config_to_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=1) + "\n"


def _trainer_config(cfg: dict, cli_protocol: str | None = None) -> TrainerConfig:
    protocol_text = cli_protocol if cli_protocol is not None else cfg["protocol"]
    return TrainerConfig(
        stft=StftConfig(**cfg["stft"]),
        loss=LossConfig(beta=cfg["loss"]["beta"], alpha=cfg["loss"]["alpha"]),
        protocol=ProtocolSpec.parse(protocol_text, minibatch=cfg["minibatch"]),
        lr_denoiser=cfg["optimizer"]["lr_denoiser"],
        lr_quality=cfg["optimizer"]["lr_quality"],
        checkpoint_every=cfg["checkpoint_every"],
        seed=cfg["seed"],
        out_dir=Path(cfg["out_dir"]),
    )


def _split_dataset(path: str):
    records = load_dataset(path)
    synth = [r for r in records if r.kind == "synthetic"]
    real = [r for r in records if r.kind == "real"]
    return synth, real


# -- commands -----------------------------------------------------------------


def cmd_mix(cfg: dict) -> int:
    mix_cfg = cfg["mix"]
    if not mix_cfg["manifest"] or not mix_cfg["dataset_dir"]:
        raise ConfigError("mix requires mix.manifest and mix.dataset_dir")
    spec = CorpusSpec(
        snr_lo=mix_cfg["snr_lo"],
        snr_hi=mix_cfg["snr_hi"],
        reverb_fraction=mix_cfg["reverb_fraction"],
        seed=cfg["seed"],
    )
    log.info("mixing %s -> %s", mix_cfg["manifest"], mix_cfg["dataset_dir"])
    records = build_corpus(mix_cfg["manifest"], mix_cfg["dataset_dir"], spec)
    synth = [r for r in records if r.kind == "synthetic"]
    n_reverb = sum(1 for r in synth if r.meta["reverberated"])
    print(f"mixed {len(records)} utterances ({len(synth)} synthetic, "
          f"{len(records) - len(synth)} real) into {mix_cfg['dataset_dir']}")
    if synth:
        print(f"reverberated: {n_reverb}/{len(synth)}")
        snrs = np.array([r.meta["snr_db"] for r in synth])
        counts, edges = np.histogram(snrs, bins=5, range=(mix_cfg["snr_lo"], mix_cfg["snr_hi"]))
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            print(f"  snr [{lo:5.1f}, {hi:5.1f}) dB: {c}")
    return 0


def _require_checkpoint(out_dir: Path, stage: str, names: list[str]) -> Path:
    for name in names:
        base = out_dir / name
        if base.with_suffix(".wdns").exists() and base.with_suffix(".json").exists():
            return base
    raise SequencingError(
        f"stage '{stage}' needs one of {names} in {out_dir}; run the earlier stages first"
    )


def cmd_train(cfg: dict, stage: str, cli_args: dict) -> int:
    tcfg = _trainer_config(cfg, cli_args.get("protocol"))
    train_cfg = cfg["train"]
    if not train_cfg["train_dataset"] or not train_cfg["val_dataset"]:
        raise ConfigError("train requires train.train_dataset and train.val_dataset")
    synth_train, real_train = _split_dataset(train_cfg["train_dataset"])
    synth_val, real_val = _split_dataset(train_cfg["val_dataset"])
    log.info("stage %s: %d synth + %d real train, %d synth + %d real val",
             stage, len(synth_train), len(real_train), len(synth_val), len(real_val))
    trainer = Trainer(tcfg, synth_train, real_train, synth_val, real_val)
    trainer.data_digests = {
        "train": dataset_digest(train_cfg["train_dataset"]),
        "val": dataset_digest(train_cfg["val_dataset"]),
    }
    out = tcfg.out_dir
    extra = {
        "stage": stage,
        "cli_args": {k: v for k, v in cli_args.items() if v is not None},
    }

    if stage == "pretrain-denoiser":
        history = trainer.pretrain_denoiser(train_cfg["pretrain_denoiser_epochs"])
        trainer.save_checkpoint(out / "pretrain_denoiser", extra)
        print(f"pretrain-denoiser: validation loss {history[0]:.6f} -> {history[-1]:.6f}")
    elif stage == "pretrain-quality":
        base = _require_checkpoint(out, stage, ["pretrain_denoiser"])
        trainer.restore_checkpoint(base)
        history = trainer.pretrain_quality(train_cfg["pretrain_quality_epochs"])
        trainer.save_checkpoint(out / "pretrain_quality", extra)
        print(f"pretrain-quality: validation mse {history[0]:.6f} -> {history[-1]:.6f}")
    elif stage == "finetune-stage1":
        base = _require_checkpoint(out, stage, ["pretrain_quality"])
        trainer.restore_checkpoint(base)
        d_hist = trainer.pretrain_denoiser(train_cfg["stage1_denoiser_epochs"])
        q_hist = trainer.pretrain_quality(train_cfg["stage1_quality_epochs"])
        trainer.save_checkpoint(out / "stage1", extra)
        print(f"finetune-stage1: denoiser val {d_hist[-1]:.6f}, estimator val {q_hist[-1]:.6f}")
    elif stage == "finetune-stage2":
        base = _require_checkpoint(out, stage, ["stage1", "pretrain_quality"])
        trainer.restore_checkpoint(base)
        cycles = cli_args.get("cycles") or train_cfg["stage2_cycles"]
        trainer.run_stage2(cycles)
        final = trainer.save_checkpoint(out / "stage2_final", extra)
        print(f"finetune-stage2: ran {cycles} protocol cycles of {tcfg.protocol}")
        bases = sorted(out.glob("ckpt_*.wdns")) + [final]
        report = select_model([p.with_suffix("") for p in bases], synth_val, real_val, tcfg)
        for name, loss_val in report.synth_ranking:
            print(f"  synth-val total loss {loss_val:.6f}  {name}")
        for name, loss_val in report.real_ranking:
            print(f"  real-val total loss {loss_val:.6f}  {name}")
        if report.chosen_synth:
            print(f"chosen (synth val): {report.chosen_synth}")
        if report.chosen_real:
            print(f"chosen (real val): {report.chosen_real}")
            print(f"selections agree: {report.agree}")
    else:
        raise ConfigError(f"unknown stage '{stage}'")
    return 0


def cmd_enhance(cfg: dict, checkpoint: str, wav_in: str, wav_out: str) -> int:
    denoiser, _, norm, _ = load_models(checkpoint)
    wave = read_wav(wav_in)
    enhanced = enhance_waveform(denoiser, norm, wave, StftConfig(**cfg["stft"]))
    write_wav(wav_out, enhanced)
    print(f"enhanced {wav_in} -> {wav_out} ({wave.size} samples)")
    return 0


def cmd_evaluate(cfg: dict, checkpoint: str, dataset: str, report_path: str,
                 identity_mask: bool) -> int:
    denoiser, quality, norm, _ = load_models(checkpoint)
    records = load_dataset(dataset)
    rows = evaluate_records(
        denoiser, quality, norm, records, StftConfig(**cfg["stft"]),
        identity_mask=identity_mask,
    )
    write_report(report_path, rows)
    mean_row = next(r for r in rows if r["utterance_id"] == "mean:all")
    print(f"evaluated {sum(1 for r in rows if not r['utterance_id'].startswith('mean:'))} "
          f"utterances; mean delta_seg_snr {mean_row['delta_seg_snr']:.3f} dB")
    print(f"report written to {report_path}")
    return 0


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weakdns", description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--out", help="override config out_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("mix", help="mix a dataset from a manifest")

    p_train = sub.add_parser("train", help="run one training stage")
    p_train.add_argument(
        "--stage",
        required=True,
        choices=["pretrain-denoiser", "pretrain-quality", "finetune-stage1", "finetune-stage2"],
    )
    p_train.add_argument("--protocol", help="protocol like 1-1-50")
    p_train.add_argument("--alpha", help="override loss.alpha")
    p_train.add_argument("--cycles", type=int, help="override stage-2 cycle count")

    p_enh = sub.add_parser("enhance", help="enhance one WAV file")
    p_enh.add_argument("--checkpoint", required=True)
    p_enh.add_argument("wav_in")
    p_enh.add_argument("wav_out")

    p_eval = sub.add_parser("evaluate", help="write a metrics report for a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--report", required=True)
    p_eval.add_argument("--identity-mask", action="store_true",
                        help="score the identity system (mask forced to 1)")
    return parser


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("WEAKDNS_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out_dir"] = args.out
        if args.command == "mix":
            return cmd_mix(cfg)
        if args.command == "train":
            if args.alpha is not None:
                try:
                    cfg["loss"]["alpha"] = float(args.alpha)
                except ValueError as exc:
                    raise ConfigError(f"--alpha must be a number, got '{args.alpha}'") from exc
            # raw flag text is echoed into checkpoint metadata untouched
            cli_args = {"protocol": args.protocol, "alpha": args.alpha, "cycles": args.cycles}
            return cmd_train(cfg, args.stage, cli_args)
        if args.command == "enhance":
            return cmd_enhance(cfg, args.checkpoint, args.wav_in, args.wav_out)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint, args.dataset, args.report,
                                args.identity_mask)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SequencingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
