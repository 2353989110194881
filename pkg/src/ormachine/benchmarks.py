"""Experiment harnesses behind the benchmark CLI and the acceptance suite:
random-matrix factorisation and completion grids, ratings-data completion,
and the stacked digits experiment. All emit plot-ready row dictionaries."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import ObservedMatrix
from .datagen import (
    SyntheticSpec,
    apply_bitflip_noise,
    calculator_digits,
    empirical_bayes_prior,
    gen_random_boolean,
    mask_random,
)
from .io import binarize_global_mean, load_movielens, observe_fraction_split
from .multilayer import Architecture, StackSchedule, impute, train_stack
from .predict import map_reconstruction, predict_plugin, reconstruction_error
from .sampler import SamplerConfig, run

__all__ = [
    "completion_point",
    "completion_suite",
    "digits_multilayer_point",
    "digits_suite",
    "factorization_point",
    "factorization_suite",
    "movielens_point",
    "movielens_suite",
    "rank_scan",
    "rows_to_csv",
]

FACTORIZATION_CASES = (
    ("1000x1000_r5_d0.5", 1000, 1000, 5, 0.5),
    ("100x100_r7_d0.5", 100, 100, 7, 0.5),
    ("100x100_r7_d0.7", 100, 100, 7, 0.7),
)
DEFAULT_FLIPS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_FRACTIONS = (0.005, 0.01, 0.02, 0.035)
MOVIELENS_FRACTIONS = (0.01, 0.05, 0.10, 0.20, 0.50, 0.95)


def _config(x, rank, seed, burn_in, samples, threads) -> SamplerConfig:
    prior = empirical_bayes_prior(x, rank)
    return SamplerConfig(
        burn_in=burn_in,
        samples=samples,
        seed=seed,
        prior_z=prior,
        prior_u=prior,
        threads=threads,
    )


def factorization_point(
    n: int,
    d: int,
    rank: int,
    density: float,
    flip: float,
    seed: int,
    burn_in: int = 100,
    samples: int = 100,
    threads: int | None = None,
) -> dict:
    """One factorisation run: generate, corrupt, factorise, score.

    Errors are mismatch fractions of the rounded reconstruction against the
    noise-free truth and against the observed (noisy) training matrix.
    """
    clean, _, _ = gen_random_boolean(SyntheticSpec(n, d, rank, density, seed=seed))
    noisy = apply_bitflip_noise(clean, flip, seed=seed + 1) if flip > 0 else clean
    x = ObservedMatrix.from_binary(noisy)
    summary = run(x, rank, _config(x, rank, seed + 2, burn_in, samples, threads))
    recon = map_reconstruction(summary.z_mean, summary.u_mean, summary.lambda_final.value)
    return {
        "error": reconstruction_error(clean, recon),
        "error_observed": reconstruction_error(noisy, recon),
        "lambda": summary.lambda_final.value,
    }


def factorization_suite(
    cases=FACTORIZATION_CASES,
    flips=DEFAULT_FLIPS,
    repeats: int = 10,
    burn_in: int = 100,
    samples: int = 100,
    threads: int | None = None,
    seed: int = 0,
) -> list[dict]:
    """Reconstruction error across the noise grid, one row per (case, flip)."""
    rows = []
    for case, n, d, rank, density in cases:
        for flip in flips:
            errs, obs_errs = [], []
            for r in range(repeats):
                point = factorization_point(
                    n, d, rank, density, flip,
                    seed=seed + 7919 * r, burn_in=burn_in, samples=samples, threads=threads,
                )
                errs.append(point["error"])
                obs_errs.append(point["error_observed"])
            rows.append(
                {
                    "suite": "factorization",
                    "case": case,
                    "n": n,
                    "d": d,
                    "rank": rank,
                    "density": density,
                    "flip": flip,
                    "repeats": repeats,
                    "error_mean": float(np.mean(errs)),
                    "error_std": float(np.std(errs)),
                    "observed_error_mean": float(np.mean(obs_errs)),
                    "observed_error_std": float(np.std(obs_errs)),
                }
            )
    return rows


def completion_point(
    n: int,
    rank: int,
    density: float,
    observed_fraction: float,
    seed: int,
    burn_in: int = 100,
    samples: int = 100,
    threads: int | None = None,
) -> dict:
    """One completion run: mask, train, predict the hidden cells."""
    clean, _, _ = gen_random_boolean(SyntheticSpec(n, n, rank, density, seed=seed))
    split = mask_random(clean, observed_fraction, seed=seed + 1)
    x = split.observed
    summary = run(x, rank, _config(x, rank, seed + 2, burn_in, samples, threads))
    probs = predict_plugin(
        summary.z_mean, summary.u_mean, summary.lambda_final.value, split.hidden_cells
    )
    truths = split.hidden_truths
    predicted = (probs >= 0.5).astype(np.int8)
    correct = predicted == truths
    ones_rate = float(truths.mean())
    margins = np.abs(probs - 0.5)
    return {
        "accuracy": float(correct.mean()),
        "baseline_accuracy": max(ones_rate, 1.0 - ones_rate),
        "margin_correct": float(margins[correct].mean()) if correct.any() else float("nan"),
        "margin_incorrect": float(margins[~correct].mean()) if (~correct).any() else float("nan"),
        "probabilities": probs,
        "truths": truths,
    }


def completion_suite(
    n: int = 250,
    rank: int = 5,
    density: float = 0.5,
    fractions=DEFAULT_FRACTIONS,
    repeats: int = 10,
    burn_in: int = 100,
    samples: int = 100,
    threads: int | None = None,
    seed: int = 0,
) -> list[dict]:
    """Completion accuracy and calibration across observed fractions."""
    rows = []
    for fraction in fractions:
        accs, m_corr, m_inc, baselines = [], [], [], []
        for r in range(repeats):
            point = completion_point(
                n, rank, density, fraction,
                seed=seed + 7919 * r, burn_in=burn_in, samples=samples, threads=threads,
            )
            accs.append(point["accuracy"])
            baselines.append(point["baseline_accuracy"])
            m_corr.append(point["margin_correct"])
            m_inc.append(point["margin_incorrect"])
        rows.append(
            {
                "suite": "completion",
                "n": n,
                "rank": rank,
                "density": density,
                "observed_fraction": fraction,
                "repeats": repeats,
                "accuracy_mean": float(np.mean(accs)),
                "accuracy_std": float(np.std(accs)),
                "baseline_accuracy_mean": float(np.mean(baselines)),
                "margin_correct_mean": float(np.nanmean(m_corr)),
                "margin_incorrect_mean": float(np.nanmean(m_inc)),
            }
        )
    return rows


def movielens_point(
    x: ObservedMatrix,
    fraction: float,
    rank: int = 2,
    seed: int = 0,
    burn_in: int = 100,
    samples: int = 100,
    threads: int | None = None,
) -> float:
    """Completion accuracy on held-back ratings after observing a fraction."""
    split = observe_fraction_split(x, fraction, seed=seed)
    train = split.train
    summary = run(train, rank, _config(train, rank, seed + 1, burn_in, samples, threads))
    probs = predict_plugin(
        summary.z_mean, summary.u_mean, summary.lambda_final.value, split.test_cells
    )
    return float(((probs >= 0.5).astype(np.int8) == split.test_truths).mean())


def movielens_suite(
    path,
    fmt: str = "100k",
    fractions=MOVIELENS_FRACTIONS,
    rank: int = 2,
    repeats: int = 10,
    burn_in: int = 100,
    samples: int = 100,
    threads: int | None = None,
    seed: int = 0,
) -> list[dict]:
    """Ratings completion accuracy across observed fractions of the data."""
    table = load_movielens(path, fmt)
    x = binarize_global_mean(table)
    rows = []
    for fraction in fractions:
        accs = [
            movielens_point(
                x, fraction, rank,
                seed=seed + 7919 * r, burn_in=burn_in, samples=samples, threads=threads,
            )
            for r in range(repeats)
        ]
        rows.append(
            {
                "suite": "movielens",
                "format": fmt,
                "rank": rank,
                "observed_fraction": fraction,
                "repeats": repeats,
                "accuracy_mean": float(np.mean(accs)),
                "accuracy_std": float(np.std(accs)),
            }
        )
    return rows


def digits_multilayer_point(
    seed: int,
    copies: int = 5,
    observed_fraction: float = 0.3,
    widths=(7, 4, 2),
    code_priors=(0.01, 0.05, 0.2),
    burn_in: int = 200,
    samples: int = 200,
    threads: int | None = None,
) -> dict:
    """Missing-data imputation on the digits set: one layer vs a stack."""
    digits = calculator_digits(copies=copies)
    split = mask_random(digits.matrix, observed_fraction, seed=seed)

    def imputation_error(stack) -> float:
        report = impute(stack)
        return float((report.map_values != split.hidden_truths).mean())

    single = train_stack(
        split.observed,
        Architecture(layer_widths=[widths[0]], code_priors=[code_priors[0]]),
        StackSchedule(burn_in=burn_in, samples=samples, seed=seed, threads=threads),
    )
    stacked = train_stack(
        split.observed,
        Architecture(layer_widths=list(widths), code_priors=list(code_priors)),
        StackSchedule(burn_in=burn_in, samples=samples, seed=seed, threads=threads),
    )
    return {
        "single_error": imputation_error(single),
        "stacked_error": imputation_error(stacked),
        "single_lambda": single.dispersions[0],
        "stacked_lambdas": stacked.dispersions,
    }


def digits_suite(
    repeats: int = 5,
    copies: int = 5,
    observed_fraction: float = 0.3,
    burn_in: int = 200,
    samples: int = 200,
    threads: int | None = None,
    seed: int = 0,
) -> list[dict]:
    """Single-layer vs stacked imputation error on masked digits."""
    singles, stacked = [], []
    for r in range(repeats):
        point = digits_multilayer_point(
            seed + r, copies, observed_fraction,
            burn_in=burn_in, samples=samples, threads=threads,
        )
        singles.append(point["single_error"])
        stacked.append(point["stacked_error"])
    return [
        {
            "suite": "digits",
            "model": "single_L7",
            "copies": copies,
            "observed_fraction": observed_fraction,
            "repeats": repeats,
            "error_mean": float(np.mean(singles)),
            "error_std": float(np.std(singles)),
        },
        {
            "suite": "digits",
            "model": "stack_7_4_2",
            "copies": copies,
            "observed_fraction": observed_fraction,
            "repeats": repeats,
            "error_mean": float(np.mean(stacked)),
            "error_std": float(np.std(stacked)),
        },
    ]


def rank_scan(
    matrix,
    ranks,
    seed: int = 0,
    burn_in: int = 100,
    samples: int = 100,
    threads: int | None = None,
) -> dict[int, np.ndarray]:
    """Posterior-mean codes of independent factorisations at each width."""
    x = matrix if isinstance(matrix, ObservedMatrix) else ObservedMatrix.from_binary(matrix)
    codes = {}
    for rank in ranks:
        summary = run(x, rank, _config(x, rank, seed, burn_in, samples, threads))
        codes[rank] = summary.u_mean
    return codes


def rows_to_csv(path, rows: list[dict]) -> None:
    """Write benchmark rows as CSV with a header naming every column."""
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(rows[0].keys())
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})
