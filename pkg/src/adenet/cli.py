"""Command-line entry point.

Subcommands: simulate, train, extract, eval, session, gradcheck, vad.
Exit codes: 0 success, 2 usage or configuration error, 3 data/runtime error.
Progress goes to stderr; stdout carries machine-parsable key=value lines.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import simulate as sim
from .activity import SegmentList, VadConfig, energy_vad, jitter_segments, read_segments_file, write_segments_file
from .dsp import AudioSignal, StftConfig, read_wav, write_wav
from .errors import (
    AdenetError,
    CheckpointError,
    ConfigurationError,
    InvalidInputError,
    NoActiveFramesError,
    NotSupportedError,
    UnsupportedFormatError,
)
from .evaluation import evaluate_matrix, evaluate_session
from .models import Checkpoint, ModelConfig, TrainConfig, forward_extract, train
from .verify import run_gradcheck_suite

MODE_ALIASES = {
    "speakerbeam": "speakerbeam",
    "aux": "adenet_aux",
    "input": "adenet_input",
    "mix": "adenet_mix",
}


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ADENET_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigurationError(f"ADENET_SEED must be an integer, got {env!r}") from exc
    return 0


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {path} not found")
    data = json.loads(p.read_text())
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    return data


# ----------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.snr_min > args.snr_max or args.sir_min > args.sir_max:
        raise ConfigurationError("range minimum exceeds maximum")
    profiles = sim.default_profiles(args.profiles, args.sample_rate, args.pause_density)
    fractions = [float(x) for x in args.split.split(",")]
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-6:
        raise ConfigurationError("--split needs three fractions summing to 1")
    n_valid = round(args.examples * fractions[1])
    n_test = round(args.examples * fractions[2])
    n_train = args.examples - n_valid - n_test
    counts = {"train": n_train, "valid": n_valid, "test": n_test}
    config_echo = {
        "command": "simulate",
        "examples": args.examples,
        "split": args.split,
        "profiles": args.profiles,
        "pause_density": args.pause_density,
        "duration_s": args.duration,
        "sir_range_db": [args.sir_min, args.sir_max],
        "snr_range_db": [args.snr_min, args.snr_max],
        "sample_rate_hz": args.sample_rate,
        "seed": seed,
    }
    _write_json(out / "config.json", config_echo)
    for i, (split, count) in enumerate(counts.items()):
        _progress(f"simulate: generating {count} {split} examples")
        samples = sim.gen_dataset(
            count,
            profiles,
            sir_range_db=(args.sir_min, args.sir_max),
            snr_range_db=(args.snr_min, args.snr_max),
            seed=seed + i * 1_000_003,
            duration_s=args.duration,
            sample_rate_hz=args.sample_rate,
        )
        manifest = sim.save_dataset(samples, out / split)
        print(f"{split}_count={manifest['count']}")
        print(f"{split}_overlap_ratio_mean={manifest['overlap_ratio_mean']:.4f}")
    return 0


# -------------------------------------------------------------------- train


def _dataset_for_training(data_dir):
    d = Path(data_dir)
    if (d / "train").is_dir():
        train_set = sim.load_dataset(d / "train")
        valid_set = sim.load_dataset(d / "valid") if (d / "valid").is_dir() else []
        return train_set, valid_set
    if (d / "index.json").exists():
        return sim.load_dataset(d), []
    raise FileNotFoundError(f"{data_dir}: no dataset found (expected train/ or index.json)")


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    file_cfg = _load_config_file(args.config)
    train_set, valid_set = _dataset_for_training(args.data)
    if not train_set:
        raise InvalidInputError(f"{args.data}: training split is empty")
    dataset = train_set + valid_set
    valid_fraction = len(valid_set) / len(dataset) if valid_set else 0.15

    stft_kwargs = dict(file_cfg.get("stft", {}))
    stft_config = StftConfig(**stft_kwargs)
    model_kwargs = dict(file_cfg.get("model", {}))
    model_kwargs["mode"] = MODE_ALIASES[args.mode]
    model_kwargs.setdefault("feature_dim", stft_config.num_bins)
    if args.units is not None:
        model_kwargs["recurrent_units"] = args.units
    if args.layers is not None:
        model_kwargs["recurrent_layers"] = args.layers
    model_config = ModelConfig(**model_kwargs)

    train_kwargs = dict(file_cfg.get("train", {}))
    train_kwargs["epochs"] = args.epochs if args.epochs is not None else train_kwargs.get("epochs", 10)
    if args.lr is not None:
        train_kwargs["lr"] = args.lr
    train_kwargs["seed"] = seed
    train_kwargs["jitter_enabled"] = bool(args.noisy_activity)
    if args.activity_variant is not None:
        train_kwargs["activity_variant"] = args.activity_variant
    train_kwargs["valid_fraction"] = valid_fraction
    train_config = TrainConfig(**train_kwargs)

    def progress(epoch, train_loss, valid_loss):
        _progress(f"train: epoch {epoch} train_loss={train_loss:.6f} valid_loss={valid_loss:.6f}")

    result = train(dataset, model_config, train_config, stft_config=stft_config, progress=progress)
    result.checkpoint.save(args.out)
    log_path = args.log or (str(args.out) + ".log.csv")
    with open(log_path, "w", encoding="utf-8") as f:
        f.write("epoch,train_loss,valid_loss\n")
        for epoch, tl, vl in result.history:
            f.write(f"{epoch},{tl:.8f},{vl:.8f}\n")
    print(f"checkpoint={args.out}")
    print(f"log={log_path}")
    print(f"epochs={train_config.epochs}")
    if result.history:
        print(f"final_valid_loss={result.history[-1][2]:.8f}")
    return 0


# ------------------------------------------------------------------ extract


def _require_file(path, what: str):
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} {path} not found")
    return path


def cmd_extract(args) -> int:
    checkpoint = Checkpoint.load(_require_file(args.checkpoint, "checkpoint"))
    mixture = read_wav(_require_file(args.mixture, "mixture"))
    mode = checkpoint.model_config.mode
    if mode == "speakerbeam":
        if args.enroll is None:
            raise ConfigurationError("speakerbeam checkpoints need --enroll")
        clue = read_wav(_require_file(args.enroll, "enrollment"))
    else:
        if args.segments is None:
            raise ConfigurationError(f"{mode} checkpoints need --segments")
        by_speaker = read_segments_file(
            _require_file(args.segments, "segments file"), total_duration_s=mixture.duration_s
        )
        if args.speaker is not None:
            if args.speaker not in by_speaker:
                raise InvalidInputError(
                    f"speaker {args.speaker!r} not in segments file "
                    f"(has {sorted(by_speaker)})"
                )
            clue = by_speaker[args.speaker]
        elif len(by_speaker) == 1:
            clue = next(iter(by_speaker.values()))
        else:
            raise ConfigurationError("segments file has several speakers; use --speaker")
    extracted, mask = forward_extract(mixture, clue, checkpoint)
    write_wav(args.out, extracted)
    print(f"extracted={args.out}")
    print(f"samples={len(extracted)}")
    if args.mask_csv:
        np.savetxt(args.mask_csv, mask.frames, delimiter=",", fmt="%.6f")
        print(f"mask_csv={args.mask_csv}")
    return 0


# --------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    seed = _resolve_seed(args)
    checkpoint = Checkpoint.load(_require_file(args.checkpoint, "checkpoint"))
    test_set = sim.load_dataset(_require_file(args.data, "test dataset"))
    _progress(f"eval: {len(test_set)} examples")
    report = evaluate_matrix(checkpoint, test_set, seed=seed)
    _write_json(args.out, json.loads(report.to_json()))
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
        print(f"csv={args.csv}")
    print(f"report={args.out}")
    for key, value in sorted(report.condition_means.items()):
        print(f"sdr_{key.replace('/', '_')}={value:.3f}")
    print(f"sdr_average={report.average:.3f}")
    print(f"sdr_mixture={report.mixture_mean:.3f}")
    print(f"sdr_baseline={report.baseline_mean:.3f}")
    return 0


# ------------------------------------------------------------------ session


def cmd_session(args) -> int:
    seed = _resolve_seed(args)
    checkpoint = Checkpoint.load(_require_file(args.checkpoint, "checkpoint"))
    fs = checkpoint.sample_rate_hz
    profiles = sim.default_profiles(args.speakers, fs, args.pause_density)
    ratios = [float(x) for x in args.overlaps.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for ri, ratio in enumerate(ratios):
        _progress(f"session: overlap target {ratio}")
        session = sim.gen_session(
            args.speakers,
            args.duration,
            ratio,
            profiles,
            seed=seed + ri * 7919,
            sample_rate_hz=fs,
            noise_snr_db=args.noise_snr,
        )
        segs = dict(session.activities)
        if args.jitter_segments > 0:
            segs = {
                spk: jitter_segments(sl, args.jitter_segments, seed=[seed, ri, si])
                for si, (spk, sl) in enumerate(segs.items())
            }
        result = evaluate_session(
            session,
            checkpoint,
            segments_per_speaker=segs,
            remove_overlaps=not args.keep_overlaps,
        )
        result["target_overlap_ratio"] = ratio
        rows.append(result)
        if args.save_audio:
            sim.save_session(session, out / f"session_{ri}")
        _write_json(out / f"session_{ri}.json", result)

    csv_path = out / "sessions.csv"
    header = "metric," + ",".join(f"ov{r:g}" for r in ratios) + ",avg"
    lines = [header]
    for metric, key in (
        ("sdr_cutout", "mean_sdr_cutout_db"),
        ("sdr_extracted", "mean_sdr_extracted_db"),
        ("cpwer", "cpwer"),
    ):
        values = [row[key] for row in rows]
        lines.append(
            f"{metric}," + ",".join(f"{v:.3f}" for v in values)
            + f",{float(np.mean(values)):.3f}"
        )
    csv_path.write_text("\n".join(lines) + "\n")
    print(f"csv={csv_path}")
    for ratio, row in zip(ratios, rows):
        print(
            f"overlap={ratio:g} sdr_cutout={row['mean_sdr_cutout_db']:.3f} "
            f"sdr_extracted={row['mean_sdr_extracted_db']:.3f} cpwer={row['cpwer']:.4f}"
        )
    return 0


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    results = run_gradcheck_suite(tolerance=args.tolerance, seed=_resolve_seed(args))
    worst = 0.0
    failed = False
    for name, report in results:
        status = "OK" if report.passed else "FAIL"
        print(f"{name}: {status} max_rel_error={report.max_rel_error:.3e}")
        worst = max(worst, report.max_rel_error)
        failed = failed or not report.passed
    print(f"max_rel_error={worst:.3e}")
    print(f"tolerance={args.tolerance:g}")
    return 3 if failed else 0


# ---------------------------------------------------------------------- vad


def cmd_vad(args) -> int:
    signal = read_wav(_require_file(args.input, "input wav"))
    config = VadConfig(
        energy_offset_db=args.offset_db,
        absolute_floor_db=args.floor_db,
        min_speech_ms=args.min_speech_ms,
        min_silence_ms=args.min_silence_ms,
    )
    segments = energy_vad(signal, config)
    write_segments_file(args.out, {args.speaker: segments})
    print(f"segments={args.out}")
    print(f"count={len(segments)}")
    print(f"active_s={segments.total_active_s:.3f}")
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adenet",
        description="Speaker-activity-driven target speech extraction toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (falls back to ADENET_SEED, then 0)")

    p = sub.add_parser("simulate", help="generate train/valid/test mixture splits")
    p.add_argument("--out", required=True)
    p.add_argument("--examples", type=int, required=True)
    p.add_argument("--split", default="0.8,0.1,0.1")
    p.add_argument("--profiles", type=int, default=4)
    p.add_argument("--pause-density", type=float, default=0.4)
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--sir-min", type=float, default=-5.0)
    p.add_argument("--sir-max", type=float, default=5.0)
    p.add_argument("--snr-min", type=float, default=10.0)
    p.add_argument("--snr-max", type=float, default=20.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    add_seed(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a mask-estimation model")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=sorted(MODE_ALIASES), required=True)
    p.add_argument("--noisy-activity", action="store_true",
                   help="jitter activity boundaries during training")
    p.add_argument("--activity-variant", choices=("without_overlap", "with_overlap"),
                   default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--units", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config file (flags override)")
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="training log CSV path")
    add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="extract a speaker from a mixture WAV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mixture", required=True)
    p.add_argument("--segments", default=None)
    p.add_argument("--speaker", default=None)
    p.add_argument("--enroll", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-csv", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="evaluate a checkpoint over the condition matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("session", help="run the diarization-segment harness")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlaps", default="0.0,0.2,0.4")
    p.add_argument("--speakers", type=int, default=4)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--pause-density", type=float, default=0.4)
    p.add_argument("--noise-snr", type=float, default=15.0)
    p.add_argument("--jitter-segments", type=float, default=0.0,
                   help="corrupt the diarization segments by this many seconds")
    p.add_argument("--keep-overlaps", action="store_true",
                   help="skip overlap removal when building activity")
    p.add_argument("--save-audio", action="store_true")
    add_seed(p)
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("gradcheck", help="verify analytic gradients by finite differences")
    p.add_argument("--tolerance", type=float, default=1e-4)
    add_seed(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("vad", help="run the energy VAD on a WAV file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--speaker", default="spk0")
    p.add_argument("--offset-db", type=float, default=12.0)
    p.add_argument("--floor-db", type=float, default=-55.0)
    p.add_argument("--min-speech-ms", type=float, default=100.0)
    p.add_argument("--min-silence-ms", type=float, default=200.0)
    add_seed(p)
    p.set_defaults(func=cmd_vad)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, UnsupportedFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NoActiveFramesError, NotSupportedError, CheckpointError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except AdenetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
