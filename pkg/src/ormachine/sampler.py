"""Metropolised Gibbs sampler for the noisy-OR factorisation model.

Every factor entry is updated by proposing a flip of its current value and
accepting with the Metropolis ratio of the two full-conditional
probabilities: min(1, p_flipped / (1 - p_flipped)). The full conditional of
a latent entry is sigma(lambda * A + eta) where A is the signed evidence
returned by `conditional_score` and eta the prior log-odds.

Within a sweep, all rows of the latent matrix are updated in parallel with
the codes frozen, then all code rows in parallel with the latents frozen,
then the dispersion is set to its clamped maximum-likelihood value. The
uniform variate behind each update is keyed by (seed, matrix, sweep, row,
column), so thread count and scheduling never change the sample path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit as _logit

from . import _kernels
from .core import (
    LAMBDA_MAX,
    BernoulliPrior,
    DegenerateError,
    Dispersion,
    FactorMatrix,
    ObservedMatrix,
)

__all__ = [
    "PosteriorSummary",
    "PosteriorTrace",
    "SamplerConfig",
    "SamplerState",
    "conditional_score",
    "conditional_score_code",
    "flip_probability",
    "init_state",
    "run",
    "set_threads",
    "sweep",
    "update_lambda",
    "update_row",
]

MATRIX_LATENT = 0
MATRIX_CODE = 1

_SEED_MASK = (1 << 64) - 1


def set_threads(threads: int | None) -> int:
    """Set the worker count for parallel sweeps; 0 or None selects all available."""
    from numba import config as numba_config
    from numba import set_num_threads

    limit = numba_config.NUMBA_NUM_THREADS
    if threads is None or threads == 0:
        threads = limit
    threads = max(1, min(int(threads), limit))
    set_num_threads(threads)
    return threads


@dataclass
class SamplerConfig:
    """Run-length, prior, and reproducibility settings for one sampler run."""

    burn_in: int = 100
    samples: int = 100
    seed: int = 0
    lambda_update: bool = True
    lambda_max: float = LAMBDA_MAX
    lambda_init: float = float(_logit(0.95))
    prior_z: BernoulliPrior = field(default_factory=lambda: BernoulliPrior(0.5))
    prior_u: BernoulliPrior = field(default_factory=lambda: BernoulliPrior(0.5))
    convergence_tol: float | None = None
    convergence_patience: int = 5
    retain_samples: bool = False
    thin: int = 1
    freeze_codes: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not 0.0 < self.lambda_max < float("inf"):
            raise ValueError("lambda_max must be positive and finite")
        if not 0.0 <= self.lambda_init <= self.lambda_max:
            raise ValueError("lambda_init must lie in [0, lambda_max]")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.convergence_patience < 1:
            raise ValueError("convergence_patience must be >= 1")


class SamplerState:
    """One factorisation layer: observations, factor matrices, dispersion, sweep counter.

    Holds a transposed copy of the observations so code updates scan
    contiguous memory, and per-entry prior logit matrices so a stacked model
    can replace the scalar latent prior with messages from the layer above.
    """

    def __init__(
        self,
        x: ObservedMatrix,
        z: FactorMatrix,
        u: FactorMatrix,
        config: SamplerConfig,
        matrix_id_z: int = MATRIX_LATENT,
        matrix_id_u: int = MATRIX_CODE,
    ):
        if z.n_rows != x.n_rows:
            raise ValueError(f"latent rows {z.n_rows} != observation rows {x.n_rows}")
        if u.n_rows != x.n_cols:
            raise ValueError(f"code rows {u.n_rows} != observation columns {x.n_cols}")
        if z.width != u.width:
            raise ValueError(f"factor widths differ: {z.width} vs {u.width}")
        self.x = x
        self.z = z
        self.u = u
        self.config = config
        self.lambda_ = float(config.lambda_init)
        self.sweep_index = 0
        self.matrix_id_z = matrix_id_z
        self.matrix_id_u = matrix_id_u
        self._seed = np.uint64(config.seed & _SEED_MASK)
        self._xt = np.ascontiguousarray(x.trits.T)
        n, d = x.shape
        width = z.width
        self._prior_z = np.full((n, width), config.prior_z.eta, dtype=np.float64)
        self._prior_u = np.full((d, width), config.prior_u.eta, dtype=np.float64)

    @property
    def width(self) -> int:
        return self.z.width

    def set_data(self, trits: np.ndarray) -> None:
        """Replace the observations in place (same shape); used by stacked layers."""
        x = ObservedMatrix(trits)
        if x.shape != self.x.shape:
            raise ValueError(f"replacement data shape {x.shape} != {self.x.shape}")
        self.x = x
        self._xt = np.ascontiguousarray(x.trits.T)

    def set_latent_prior_logits(self, logits: np.ndarray) -> None:
        """Per-entry prior log-odds for the latent matrix (stacked-model coupling)."""
        logits = np.ascontiguousarray(logits, dtype=np.float64)
        if logits.shape != self.z.shape:
            raise ValueError(f"prior logits shape {logits.shape} != {self.z.shape}")
        self._prior_z = logits

    def count_correct(self) -> int:
        return int(_kernels.count_correct(self.x.trits, self.z.bits, self.u.bits))


class PosteriorTrace:
    """Accumulators for posterior means, the dispersion trace, and optional hard samples."""

    def __init__(self, n: int, d: int, width: int):
        self.z_sum = np.zeros((n, width), dtype=np.int64)
        self.u_sum = np.zeros((d, width), dtype=np.int64)
        self.n_samples = 0
        self.lambda_trace: list[float] = []
        self.samples: list[tuple[np.ndarray, np.ndarray]] = []

    def accumulate(self, state: SamplerState, retain: bool, thin: int) -> None:
        self.z_sum += state.z.bits
        self.u_sum += state.u.bits
        if retain and self.n_samples % thin == 0:
            self.samples.append((state.z.bits.copy(), state.u.bits.copy()))
        self.n_samples += 1

    def z_mean(self) -> np.ndarray:
        return self.z_sum / max(self.n_samples, 1)

    def u_mean(self) -> np.ndarray:
        return self.u_sum / max(self.n_samples, 1)


@dataclass
class PosteriorSummary:
    """Posterior means, rounded (MAP) factors, and the dispersion trace of a run."""

    z_mean: np.ndarray
    u_mean: np.ndarray
    z_map: np.ndarray
    u_map: np.ndarray
    lambda_final: Dispersion
    lambda_trace: np.ndarray
    n_samples: int
    config: SamplerConfig
    samples: list[tuple[np.ndarray, np.ndarray]] | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.z_mean.shape[0], self.u_mean.shape[0], self.z_mean.shape[1])


def map_round(means: np.ndarray) -> np.ndarray:
    """Round posterior means at 1/2, ties to 1."""
    return (means >= 0.5).astype(np.int8)


def conditional_score(x, z, u, n: int, l: int) -> int:
    """Signed evidence A for latent entry (n, l): sum over features of the
    observation trit, restricted to features where code l is on and no other
    active code already explains the cell. Independent of the current value."""
    xm = x.trits if isinstance(x, ObservedMatrix) else np.ascontiguousarray(x, dtype=np.int8)
    zb = z.bits if isinstance(z, FactorMatrix) else np.ascontiguousarray(z, dtype=np.int8)
    ub = u.bits if isinstance(u, FactorMatrix) else np.ascontiguousarray(u, dtype=np.int8)
    if not (0 <= n < zb.shape[0] and 0 <= l < zb.shape[1]):
        raise IndexError(f"entry ({n}, {l}) out of range for latents {zb.shape}")
    return int(_kernels.score_entry(xm[n], zb[n], ub, l))


def conditional_score_code(x, z, u, d: int, l: int) -> int:
    """Signed evidence for code entry (d, l); latents and codes swap roles."""
    xm = x.trits if isinstance(x, ObservedMatrix) else np.ascontiguousarray(x, dtype=np.int8)
    zb = z.bits if isinstance(z, FactorMatrix) else np.ascontiguousarray(z, dtype=np.int8)
    ub = u.bits if isinstance(u, FactorMatrix) else np.ascontiguousarray(u, dtype=np.int8)
    if not (0 <= d < ub.shape[0] and 0 <= l < ub.shape[1]):
        raise IndexError(f"entry ({d}, {l}) out of range for codes {ub.shape}")
    xt = np.ascontiguousarray(xm.T)
    return int(_kernels.score_entry(xt[d], ub[d], zb, l))


def flip_probability(score: int, current: int, lam: float, eta: float) -> float:
    """Probability of accepting the proposed flip of a factor entry.

    With s = lam * score + eta, the full conditional of value 1 is sigma(s)
    and the acceptance is min(1, exp(-(2*current - 1) * s)).
    """
    if lam < 0:
        raise ValueError(f"dispersion must be nonnegative, got {lam}")
    s = lam * score + eta
    t = -s if current else s
    return 1.0 if t >= 0 else math.exp(t)


def update_row(state: SamplerState, which: str, row: int) -> None:
    """Update one factor row in place, consuming the row's RNG stream for the
    current sweep index. `which` is 'latent' or 'code'."""
    if which == "latent":
        _kernels.update_row(
            state.x.trits[row],
            state.z.bits[row],
            state.u.bits,
            state.lambda_,
            state._prior_z[row],
            state._seed,
            state.matrix_id_z,
            state.sweep_index,
            row,
        )
    elif which == "code":
        _kernels.update_row(
            state._xt[row],
            state.u.bits[row],
            state.z.bits,
            state.lambda_,
            state._prior_u[row],
            state._seed,
            state.matrix_id_u,
            state.sweep_index,
            row,
        )
    else:
        raise ValueError(f"which must be 'latent' or 'code', got {which!r}")


def update_lambda(correct: int, observed: int, lambda_max: float = LAMBDA_MAX) -> float:
    """Clamped maximum-likelihood dispersion: logit of the observed hit rate.

    The hit rate is clamped to [1/2, sigma(lambda_max)], so the result lies
    in [0, lambda_max] and a perfect fit stays finite.
    """
    if observed < 1:
        raise DegenerateError("cannot update dispersion without observed cells")
    if not 0 <= correct <= observed:
        raise ValueError(f"correct count {correct} outside [0, {observed}]")
    rate = correct / observed
    if rate <= 0.5:
        return 0.0
    return min(float(_logit(rate)), float(lambda_max))


def sweep(state: SamplerState, trace: PosteriorTrace | None = None) -> SamplerState:
    """One full sweep: all latent rows, then all code rows, then the dispersion.

    Appends the new dispersion to the trace and, once the configured burn-in
    is past, accumulates the post-sweep state into the posterior counters.
    """
    cfg = state.config
    _kernels.half_sweep(
        state.x.trits,
        state.z.bits,
        state.u.bits,
        state.lambda_,
        state._prior_z,
        state._seed,
        state.matrix_id_z,
        state.sweep_index,
    )
    if not cfg.freeze_codes:
        _kernels.half_sweep(
            state._xt,
            state.u.bits,
            state.z.bits,
            state.lambda_,
            state._prior_u,
            state._seed,
            state.matrix_id_u,
            state.sweep_index,
        )
    if cfg.lambda_update and state.x.observed_count > 0:
        state.lambda_ = update_lambda(
            state.count_correct(), state.x.observed_count, cfg.lambda_max
        )
    executed = state.sweep_index
    state.sweep_index += 1
    if trace is not None:
        trace.lambda_trace.append(state.lambda_)
        if executed >= cfg.burn_in:
            trace.accumulate(state, cfg.retain_samples, cfg.thin)
    return state


def init_state(
    x,
    width: int,
    config: SamplerConfig | None = None,
    init_z: np.ndarray | None = None,
    init_u: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> SamplerState:
    """Fresh sampler state with fair-coin factor initialisation."""
    if width < 1:
        raise ValueError("latent width must be >= 1")
    if config is None:
        config = SamplerConfig()
    if not isinstance(x, ObservedMatrix):
        x = ObservedMatrix(x)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n, d = x.shape
    zb = (
        rng.integers(0, 2, size=(n, width), dtype=np.int8)
        if init_z is None
        else np.ascontiguousarray(init_z, dtype=np.int8)
    )
    ub = (
        rng.integers(0, 2, size=(d, width), dtype=np.int8)
        if init_u is None
        else np.ascontiguousarray(init_u, dtype=np.int8)
    )
    return SamplerState(x, FactorMatrix(zb, "latent"), FactorMatrix(ub, "code"), config)


def summarize(state: SamplerState, trace: PosteriorTrace) -> PosteriorSummary:
    """Posterior summary from accumulated counters and the final dispersion."""
    z_mean = trace.z_mean()
    u_mean = trace.u_mean()
    return PosteriorSummary(
        z_mean=z_mean,
        u_mean=u_mean,
        z_map=map_round(z_mean),
        u_map=map_round(u_mean),
        lambda_final=Dispersion(state.lambda_, state.config.lambda_max),
        lambda_trace=np.asarray(trace.lambda_trace, dtype=np.float64),
        n_samples=trace.n_samples,
        config=state.config,
        samples=trace.samples if state.config.retain_samples else None,
    )


def run(
    x,
    width: int,
    config: SamplerConfig | None = None,
    init_z: np.ndarray | None = None,
    init_u: np.ndarray | None = None,
) -> PosteriorSummary:
    """Factorise `x` at the given latent width and return the posterior summary.

    Burn-in may stop early once the dispersion has moved less than
    `convergence_tol` for `convergence_patience` consecutive sweeps; the
    sampling phase always starts at sweep index `burn_in` so early stopping
    never changes the sampling-phase RNG streams.
    """
    if config is None:
        config = SamplerConfig()
    if config.threads is not None:
        set_threads(config.threads)
    state = init_state(x, width, config, init_z=init_z, init_u=init_u)
    n, d = state.x.shape
    trace = PosteriorTrace(n, d, width)

    stable = 0
    prev_lambda = state.lambda_
    for _ in range(config.burn_in):
        sweep(state, trace)
        if config.convergence_tol is not None:
            if abs(state.lambda_ - prev_lambda) < config.convergence_tol:
                stable += 1
            else:
                stable = 0
            prev_lambda = state.lambda_
            if stable >= config.convergence_patience:
                break
    state.sweep_index = config.burn_in

    for _ in range(config.samples):
        sweep(state, trace)
    return summarize(state, trace)


def chain_state_histogram(
    x,
    init_z: np.ndarray,
    init_u: np.ndarray,
    lam: float,
    n_sweeps: int,
    seed: int = 0,
    prior_z: BernoulliPrior | None = None,
    prior_u: BernoulliPrior | None = None,
) -> np.ndarray:
    """Joint-state visit counts at fixed dispersion, for desk-scale diagnostics.

    Runs `n_sweeps` full sweeps without dispersion updates and counts the
    post-sweep joint (z, u) configuration, encoded row-major with the latent
    bits first. Only sensible when the total bit count is small.
    """
    if not isinstance(x, ObservedMatrix):
        x = ObservedMatrix(x)
    zb = np.ascontiguousarray(init_z, dtype=np.int8).copy()
    ub = np.ascontiguousarray(init_u, dtype=np.int8).copy()
    total_bits = zb.size + ub.size
    if total_bits > 24:
        raise ValueError(f"state space too large to histogram ({total_bits} bits)")
    eta_z = (prior_z or BernoulliPrior(0.5)).eta
    eta_u = (prior_u or BernoulliPrior(0.5)).eta
    counts = np.zeros(1 << total_bits, dtype=np.int64)
    _kernels.chain_state_histogram(
        x.trits,
        np.ascontiguousarray(x.trits.T),
        zb,
        ub,
        float(lam),
        np.full(zb.shape, eta_z, dtype=np.float64),
        np.full(ub.shape, eta_u, dtype=np.float64),
        np.uint64(seed & _SEED_MASK),
        int(n_sweeps),
        counts,
    )
    return counts
