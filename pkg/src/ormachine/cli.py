"""Command-line interface: simulate, factorize, complete, benchmark, digits.

Every command writes its outputs into --out together with a key=value
manifest (full flag set, input digests, output paths, phase timings) that
reconstructs the run. Exit codes: 0 success, 2 usage error, 3 data error,
4 numeric/degenerate error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from . import benchmarks
from .core import DegenerateError, ObservedMatrix
from .datagen import (
    SyntheticSpec,
    apply_bitflip_noise,
    calculator_digits,
    empirical_bayes_prior,
    gen_random_boolean,
    mask_random,
)
from .io import load_matrix, save_matrix, save_summary
from .multilayer import Architecture, StackSchedule, impute, train_stack
from .predict import (
    calibration_split,
    map_reconstruction,
    predict_plugin,
    reconstruction_error,
    roc_curve,
)
from .sampler import BernoulliPrior, SamplerConfig, run

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(outdir: Path, command: str, args, inputs, outputs, timings) -> Path:
    path = outdir / "manifest.txt"
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"command={command}\n")
        for key, val in sorted(vars(args).items()):
            if key == "func" or val is None:
                continue
            fh.write(f"flag.{key.replace('_', '-')}={val}\n")
        for name, ipath in inputs.items():
            fh.write(f"input.{name}={ipath}\n")
            fh.write(f"input.{name}.sha256={_sha256(Path(ipath))}\n")
        for name, opath in outputs.items():
            fh.write(f"output.{name}={opath}\n")
        for name, seconds in timings.items():
            fh.write(f"timing.{name}_s={seconds:.3f}\n")
    return path


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sampler_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--burn-in", type=int, default=100, help="burn-in sweeps")
    parser.add_argument("--samples", type=int, default=100, help="posterior sample sweeps")
    parser.add_argument("--fast", action="store_true", help="preset: 20 burn-in / 20 samples")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (0 = all cores)")


def _sweep_counts(args) -> tuple[int, int]:
    if args.fast:
        return 20, 20
    return args.burn_in, args.samples


def _load_trits(path) -> ObservedMatrix:
    return load_matrix(Path(path))


def _load_bits(path) -> np.ndarray:
    x = load_matrix(Path(path))
    if x.missing_mask.any():
        raise ValueError(f"{path}: expected a fully observed binary matrix")
    return ((x.trits + 1) // 2).astype(np.int8)


def cmd_simulate(args) -> int:
    out = _outdir(args)
    t0 = time.monotonic()
    spec = SyntheticSpec(
        n=args.n,
        d=args.d,
        rank=args.rank,
        target_density=args.density,
        flip_prob=args.flip,
        observed_fraction=args.observe,
        seed=args.seed,
    )
    clean, z_true, u_true = gen_random_boolean(spec)
    noisy = apply_bitflip_noise(clean, args.flip, seed=args.seed + 1) if args.flip > 0 else clean
    masked = (
        mask_random(noisy, args.observe, seed=args.seed + 2).observed
        if args.observe < 1.0
        else ObservedMatrix.from_binary(noisy)
    )
    outputs = {}
    for name, matrix in (
        ("clean", clean),
        ("noisy", noisy),
        ("masked", masked),
        ("z_true", z_true),
        ("u_true", u_true),
    ):
        path = out / f"{name}.csv"
        save_matrix(path, matrix)
        outputs[name] = path
    _write_manifest(out, "simulate", args, {}, outputs, {"total": time.monotonic() - t0})
    print(f"simulate: wrote {len(outputs)} matrices to {out}")
    return EXIT_OK


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def cmd_factorize(args) -> int:
    out = _outdir(args)
    burn_in, samples = _sweep_counts(args)
    if args.rank < 1:
        raise ValueError("rank must be >= 1")
    x = _load_trits(args.input)
    inputs = {"in": args.input}
    t0 = time.monotonic()

    if args.layers:
        widths = _parse_int_list(args.layers)
        priors = (
            _parse_float_list(args.code_priors)
            if args.code_priors
            else [empirical_bayes_prior(x, w).p for w in widths]
        )
        stack = train_stack(
            x,
            Architecture(layer_widths=widths, code_priors=priors),
            StackSchedule(burn_in=burn_in, samples=samples, seed=args.seed, threads=args.threads),
        )
        train_s = time.monotonic() - t0
        outputs = {}
        for k, summary in enumerate(stack.summaries):
            layer_dir = out / f"layer{k}"
            for name, path in save_summary(layer_dir, summary).items():
                outputs[f"layer{k}.{name}"] = path
        bottom = stack.summaries[0]
        recon = map_reconstruction(
            bottom.z_mean, bottom.u_mean, bottom.lambda_final.value
        )
        lambda_final = bottom.lambda_final.value
        metrics = {
            "lambda_final": lambda_final,
            "layer_lambdas": ";".join(f"{v:.6f}" for v in stack.dispersions),
        }
    else:
        prior_z = (
            BernoulliPrior(args.prior_z)
            if args.prior_z is not None
            else empirical_bayes_prior(x, args.rank)
        )
        prior_u = (
            BernoulliPrior(args.prior_u)
            if args.prior_u is not None
            else empirical_bayes_prior(x, args.rank)
        )
        init_u = None
        freeze = False
        if args.freeze_codes:
            init_u = _load_bits(args.freeze_codes)
            inputs["freeze_codes"] = args.freeze_codes
            freeze = True
        config = SamplerConfig(
            burn_in=burn_in,
            samples=samples,
            seed=args.seed,
            prior_z=prior_z,
            prior_u=prior_u,
            freeze_codes=freeze,
            threads=args.threads,
        )
        summary = run(x, args.rank, config, init_u=init_u)
        train_s = time.monotonic() - t0
        outputs = dict(save_summary(out, summary))
        recon = map_reconstruction(
            summary.z_mean, summary.u_mean, summary.lambda_final.value
        )
        lambda_final = summary.lambda_final.value
        metrics = {"lambda_final": lambda_final}

    observed = x.trits != 0
    x_bits = (x.trits == 1).astype(np.int8)
    metrics["fraction_correct_observed"] = 1.0 - reconstruction_error(
        x_bits, recon, mask=observed
    )
    if args.truth:
        truth = _load_bits(args.truth)
        inputs["truth"] = args.truth
        metrics["reconstruction_error"] = reconstruction_error(truth, recon)
        metrics["fraction_correct"] = 1.0 - metrics["reconstruction_error"]
    metrics_path = out / "metrics.csv"
    with metrics_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric,value\n")
        for key, val in metrics.items():
            fh.write(f"{key},{val}\n")
    outputs["metrics"] = metrics_path
    _write_manifest(out, "factorize", args, inputs, outputs, {"train": train_s})
    print(f"factorize: lambda={lambda_final:.4f} -> {out}")
    return EXIT_OK


def cmd_complete(args) -> int:
    out = _outdir(args)
    burn_in, samples = _sweep_counts(args)
    x = _load_trits(args.input)
    inputs = {"in": args.input}
    truth_bits = None
    if args.truth:
        truth_bits = _load_bits(args.truth)
        inputs["truth"] = args.truth
    t0 = time.monotonic()
    prior = empirical_bayes_prior(x, args.rank)
    config = SamplerConfig(
        burn_in=burn_in, samples=samples, seed=args.seed,
        prior_z=prior, prior_u=prior, threads=args.threads,
    )
    summary = run(x, args.rank, config)
    train_s = time.monotonic() - t0
    cells = np.argwhere(x.trits == 0)
    probs = predict_plugin(
        summary.z_mean, summary.u_mean, summary.lambda_final.value, cells
    ) if len(cells) else np.empty(0)
    map_vals = (probs >= args.threshold).astype(np.int8)

    outputs = {}
    pred_path = out / "predictions.csv"
    with pred_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("row,col,probability,map\n")
        for (r, c), p, m in zip(cells, probs, map_vals):
            fh.write(f"{r},{c},{p:.6f},{m}\n")
    outputs["predictions"] = pred_path

    if truth_bits is not None and len(cells):
        truths = truth_bits[cells[:, 0], cells[:, 1]]
        correct = map_vals == truths
        metrics = {
            "cells": len(cells),
            "accuracy": float(correct.mean()),
            "tp": int(np.sum((map_vals == 1) & (truths == 1))),
            "fp": int(np.sum((map_vals == 1) & (truths == 0))),
            "tn": int(np.sum((map_vals == 0) & (truths == 0))),
            "fn": int(np.sum((map_vals == 0) & (truths == 1))),
            "lambda_final": summary.lambda_final.value,
        }
        metrics_path = out / "metrics.csv"
        with metrics_path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("metric,value\n")
            for key, val in metrics.items():
                fh.write(f"{key},{val}\n")
        outputs["metrics"] = metrics_path
        if args.roc:
            points = roc_curve(probs, truths)
            roc_path = out / "roc.csv"
            with roc_path.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write("fpr,tpr\n")
                for fpr, tpr in points:
                    fh.write(f"{fpr:.6f},{tpr:.6f}\n")
            outputs["roc"] = roc_path
        if args.calibration:
            split = calibration_split(probs, truths)
            cal_path = out / "calibration.csv"
            with cal_path.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write("bin_low,bin_high,count_correct,count_incorrect\n")
                for i in range(len(split.correct_hist)):
                    fh.write(
                        f"{split.bin_edges[i]:.3f},{split.bin_edges[i + 1]:.3f},"
                        f"{split.correct_hist[i]},{split.incorrect_hist[i]}\n"
                    )
            outputs["calibration"] = cal_path
    _write_manifest(out, "complete", args, inputs, outputs, {"train": train_s})
    print(f"complete: {len(cells)} cells predicted -> {out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    out = _outdir(args)
    burn_in, samples = _sweep_counts(args)
    t0 = time.monotonic()
    inputs = {}
    if args.suite == "factorization":
        rows = benchmarks.factorization_suite(
            repeats=args.repeats, burn_in=burn_in, samples=samples,
            threads=args.threads, seed=args.seed,
        )
    elif args.suite == "completion":
        rows = benchmarks.completion_suite(
            repeats=args.repeats, burn_in=burn_in, samples=samples,
            threads=args.threads, seed=args.seed,
        )
    elif args.suite == "movielens":
        if not args.data:
            raise ValueError("--suite movielens requires --data pointing at the ratings file")
        inputs["data"] = args.data
        rows = benchmarks.movielens_suite(
            args.data, fmt=args.format, repeats=args.repeats,
            burn_in=burn_in, samples=samples, threads=args.threads, seed=args.seed,
        )
    elif args.suite == "digits":
        rows = benchmarks.digits_suite(
            repeats=args.repeats, burn_in=burn_in, samples=samples,
            threads=args.threads, seed=args.seed,
        )
    else:
        raise ValueError(f"unknown suite {args.suite!r}")
    csv_path = out / f"{args.suite}.csv"
    benchmarks.rows_to_csv(csv_path, rows)
    _write_manifest(
        out, "benchmark", args, inputs, {"table": csv_path},
        {"total": time.monotonic() - t0},
    )
    print(f"benchmark[{args.suite}]: {len(rows)} rows -> {csv_path}")
    return EXIT_OK


def cmd_digits(args) -> int:
    out = _outdir(args)
    t0 = time.monotonic()
    ds = calculator_digits(
        copies=args.copies,
        flip_prob=args.flip,
        height=args.height,
        width=args.width,
        orientation=args.orientation,
        seed=args.seed,
    )
    outputs = {}
    digits_path = out / "digits.csv"
    save_matrix(digits_path, ds.matrix)
    outputs["digits"] = digits_path
    labels_path = out / "labels.csv"
    with labels_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("row,digit\n")
        for i, label in enumerate(ds.labels):
            fh.write(f"{i},{label}\n")
    outputs["labels"] = labels_path
    matrix = ds.matrix
    if args.missing > 0:
        split = mask_random(ds.matrix, 1.0 - args.missing, seed=args.seed + 1)
        masked_path = out / "masked.csv"
        save_matrix(masked_path, split.observed)
        outputs["masked"] = masked_path
        matrix = split.observed
    if args.scan_ranks:
        lo, hi = (int(v) for v in args.scan_ranks.split(".."))
        burn_in, samples = _sweep_counts(args)
        codes = benchmarks.rank_scan(
            matrix, range(lo, hi + 1),
            seed=args.seed, burn_in=burn_in, samples=samples, threads=args.threads,
        )
        for rank, u_mean in codes.items():
            path = out / f"rank_{rank}_codes.csv"
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write("rows,cols\n")
                fh.write(f"{u_mean.shape[0]},{u_mean.shape[1]}\n")
                for row in u_mean:
                    fh.write(",".join(f"{v:.6f}" for v in row) + "\n")
            outputs[f"rank_{rank}_codes"] = path
    _write_manifest(out, "digits", args, {}, outputs, {"total": time.monotonic() - t0})
    print(f"digits: {ds.matrix.shape[0]} rows -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ormachine",
        description="Bayesian Boolean matrix factorisation, completion and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic factorisation/completion dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--flip", type=float, default=0.0, help="bit-flip noise probability")
    p.add_argument("--observe", type=float, default=1.0, help="observed cell fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("factorize", help="factorise a (possibly incomplete) binary matrix")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--prior-z", type=float, default=None,
                   help="latent prior (default: empirical-Bayes from the observed density)")
    p.add_argument("--prior-u", type=float, default=None,
                   help="code prior (default: empirical-Bayes from the observed density)")
    p.add_argument("--layers", default=None, help="stacked widths, e.g. 7,4,2")
    p.add_argument("--code-priors", default=None, help="per-layer code priors, e.g. 0.01,0.05,0.2")
    p.add_argument("--freeze-codes", default=None, help="matrix file of fixed codes")
    p.add_argument("--truth", default=None, help="noise-free truth for scoring")
    p.add_argument("--out", required=True)
    _sampler_flags(p)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("complete", help="predict the missing cells of a matrix")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--roc", action="store_true", help="emit the ROC curve (needs --truth)")
    p.add_argument("--calibration", action="store_true", help="emit calibration histograms")
    p.add_argument("--out", required=True)
    _sampler_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("benchmark", help="run a named experiment suite")
    p.add_argument("--suite", required=True,
                   choices=["factorization", "completion", "movielens", "digits"])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--data", default=None, help="ratings file for the movielens suite")
    p.add_argument("--format", default="100k", choices=["100k", "1m"])
    p.add_argument("--out", required=True)
    _sampler_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("digits", help="generate the seven-segment digits set")
    p.add_argument("--copies", type=int, default=1)
    p.add_argument("--missing", type=float, default=0.0, help="fraction of cells hidden")
    p.add_argument("--flip", type=float, default=0.0)
    p.add_argument("--height", type=int, default=17)
    p.add_argument("--width", type=int, default=10)
    p.add_argument("--orientation", default="tall", choices=["tall", "wide"])
    p.add_argument("--scan-ranks", default=None, help="factorise at each width, e.g. 3..7")
    p.add_argument("--out", required=True)
    _sampler_flags(p)
    p.set_defaults(func=cmd_digits)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "roc", False) and not getattr(args, "truth", None):
        parser.error("--roc requires --truth")
    try:
        return args.func(args)
    except DegenerateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
