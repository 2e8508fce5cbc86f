"""Command-line entry point: train | synth | eval | slice-demo.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np


def _build_parser():
    p = argparse.ArgumentParser(prog="sanvoc",
                                description="Adversarial vocoder training and evaluation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run adversarial training")
    t.add_argument("--config", help="flat key = value config file")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--family", help="adversarial family (ls-san, ls-gan, ...)")
    t.add_argument("--objective", choices=("san", "gan"))
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")

    s = sub.add_parser("synth", help="vocode a WAV through a trained checkpoint")
    s.add_argument("--checkpoint", required=True)
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--wav", help="input WAV (log-mel is computed from it)")
    grp.add_argument("--mel-from", dest="mel_from", help="alias for --wav")
    s.add_argument("--out", required=True, help="output WAV path")

    e = sub.add_parser("eval", help="objective metrics over matched WAV directories")
    e.add_argument("--ref", required=True)
    e.add_argument("--deg", required=True)
    e.add_argument("--out", required=True, help="output CSV path")
    e.add_argument("--metrics", default="mstft,mcd,periodicity,vuv_f1",
                   help="comma-separated subset of mstft,mcd,periodicity,vuv_f1")

    d = sub.add_parser("slice-demo", help="optimal-projection demo on 2-d Gaussians")
    d.add_argument("--out", required=True, help="output directory for CSVs")
    d.add_argument("--mu1", default="2,0", help="real-Gaussian mean 'a,b'")
    d.add_argument("--mu2", default="-2,0", help="fake-Gaussian mean 'c,d'")
    d.add_argument("--steps", type=int, default=600)
    d.add_argument("--n", type=int, default=4096)
    d.add_argument("--family", default="ls-san")
    d.add_argument("--seed", type=int, default=0)
    return p


def _resolved_config(args):
    from .config import TrainConfig, apply_overrides, load_config

    cfg = TrainConfig()
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    if args.steps is not None:
        overrides["train.steps"] = args.steps
    if args.family:
        overrides["gan.family"] = args.family
    if args.objective:
        overrides["gan.objective"] = args.objective
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    return apply_overrides(cfg, overrides)


def cmd_train(args) -> int:
    from .config import ConfigError, config_text
    from .objectives import get_family
    from .optim import NanGradientError
    from .trainer import TrainingDiverged, train

    try:
        cfg = _resolved_config(args)
        cfg.validate()
        if cfg.objective == "san" and not get_family(cfg.family).san_valid:
            print(f"error: family {cfg.family!r}: R3 not monotonically decreasing", file=sys.stderr)
            return 1
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print("# resolved config")
    print(config_text(cfg), end="")
    try:
        state, _ = train(cfg, out_dir=args.out)
    except (TrainingDiverged, NanGradientError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    print(f"finished at step {state.step}; outputs in {args.out}")
    return 0


def cmd_synth(args) -> int:
    from .checkpoint import CheckpointError
    from .dsp import Waveform, log_mel
    from .trainer import load_state
    from .wavio import WavFormatError, wav_read, wav_write

    src = args.wav or args.mel_from
    try:
        state = load_state(args.checkpoint)
        wave = wav_read(src)
    except (CheckpointError, WavFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    cfg = state.config
    if wave.sample_rate != cfg.sample_rate:
        print(f"error: input sample rate {wave.sample_rate} != checkpoint "
              f"sample rate {cfg.sample_rate}", file=sys.stderr)
        return 1
    print("# resolved config")
    from .config import config_text
    print(config_text(cfg), end="")
    mel = log_mel(wave, cfg.mel_params())
    out = state.generator.forward(mel).data
    if not np.isfinite(out).all():
        print("numerical failure: non-finite generator output", file=sys.stderr)
        return 2
    wav_write(args.out, Waveform(np.clip(out, -1.0, 1.0), cfg.sample_rate))
    print(f"wrote {args.out} ({out.shape[-1]} samples)")
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_pairs

    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    valid = {"mstft", "mcd", "periodicity", "vuv_f1"}
    bad = set(metrics) - valid
    if bad:
        print(f"error: unknown metrics {sorted(bad)}; accepted: {sorted(valid)}", file=sys.stderr)
        return 1
    print(f"# evaluating {metrics} on ref={args.ref} deg={args.deg}")
    try:
        report = evaluate_pairs(args.ref, args.deg, metrics, csv_path=args.out)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    avg = report.macro_average()
    print(f"{report.file_count} files; macro averages: "
          + ", ".join(f"{m}={avg[m]:.6f}" for m in metrics))
    return 0


def cmd_slice_demo(args) -> int:
    from .slicedemo import slice_demo

    try:
        mu1 = [float(v) for v in args.mu1.split(",")]
        mu2 = [float(v) for v in args.mu2.split(",")]
        if len(mu1) != 2 or len(mu2) != 2:
            raise ValueError("means must be 2-d, e.g. '2,0'")
        print(f"# slice-demo family={args.family} mu1={mu1} mu2={mu2} "
              f"n={args.n} steps={args.steps} seed={args.seed}")
        result = slice_demo(mu1, mu2, n=args.n, steps=args.steps,
                            family=args.family, seed=args.seed, out_dir=args.out)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if result.cosine is None:
        print("degenerate means: cosine check skipped")
    else:
        print(f"final |cos(omega, oracle)| = {result.cosine:.6f}")
    print(f"CSVs written to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return {
        "train": cmd_train,
        "synth": cmd_synth,
        "eval": cmd_eval,
        "slice-demo": cmd_slice_demo,
    }[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
