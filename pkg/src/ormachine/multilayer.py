"""Stacked factorisation: each layer factorises the latent matrix of the one
below it, sharing rows with the data.

During joint burn-in the layers are swept round-robin. A layer's data is the
current hard latent sample of the layer below; its latent prior is the
log-odds the layer above assigns to that entry, fed forward through smoothed
running means of the upper state (soft while the upper layer is still
disordered, hardening to +/- lambda_above, the exact conditional of the
joint stacked model, as it settles). In the sampling phase every layer is
sampled against the same frozen scaffold: all other layers held at their
rounded burn-in running means.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import BernoulliPrior, ObservedMatrix, boolean_product, sigmoid
from .predict import PredictionReport, predict_plugin
from .sampler import (
    PosteriorSummary,
    PosteriorTrace,
    SamplerConfig,
    SamplerState,
    set_threads,
    summarize,
    sweep,
)
from .core import FactorMatrix

__all__ = [
    "Architecture",
    "LayerStack",
    "StackSchedule",
    "feed_forward",
    "impute",
    "train_stack",
]


def _as_prior(p) -> BernoulliPrior:
    return p if isinstance(p, BernoulliPrior) else BernoulliPrior(float(p))


@dataclass
class Architecture:
    """Layer widths with per-layer code priors and optional config overrides."""

    layer_widths: list[int]
    code_priors: list[float | BernoulliPrior] | None = None
    z_prior: float | BernoulliPrior = 0.5  # prior on the top layer's latents
    configs: list[SamplerConfig | None] | None = None

    def __post_init__(self):
        if len(self.layer_widths) < 1:
            raise ValueError("architecture needs at least one layer")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be >= 1")
        if self.code_priors is None:
            self.code_priors = [BernoulliPrior(0.5)] * len(self.layer_widths)
        if len(self.code_priors) != len(self.layer_widths):
            raise ValueError("need one code prior per layer")
        self.code_priors = [_as_prior(p) for p in self.code_priors]
        self.z_prior = _as_prior(self.z_prior)
        if self.configs is not None and len(self.configs) != len(self.layer_widths):
            raise ValueError("need one config (or None) per layer")

    @property
    def depth(self) -> int:
        return len(self.layer_widths)


@dataclass
class StackSchedule:
    """Round counts for joint burn-in and the per-layer sampling phase."""

    burn_in: int = 200
    samples: int = 200
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        if self.burn_in < 0 or self.samples < 1:
            raise ValueError("burn_in must be >= 0 and samples >= 1")


@dataclass
class LayerStack:
    """Trained stack: per-layer sampler states and posterior summaries."""

    layers: list[SamplerState]
    architecture: Architecture
    schedule: StackSchedule
    summaries: list[PosteriorSummary]
    data: ObservedMatrix

    @property
    def depth(self) -> int:
        return len(self.summaries)

    @property
    def dispersions(self) -> list[float]:
        return [s.lambda_final.value for s in self.summaries]


def _signed(bits: np.ndarray) -> np.ndarray:
    return (2 * bits - 1).astype(np.int8)


def _mean_field_logits(z_mean: np.ndarray, u_mean: np.ndarray, lam: float) -> np.ndarray:
    """Log-odds the upper layer assigns to each entry of its data matrix.

    q = 1 - prod_j (1 - z_mean u_mean) through the upper layer's dispersion;
    hard means give exactly +/- lam, soft means attenuate the message.
    """
    q = np.ones((z_mean.shape[0], u_mean.shape[0]), dtype=np.float64)
    for j in range(z_mean.shape[1]):
        q *= 1.0 - np.outer(z_mean[:, j], u_mean[:, j])
    q = 1.0 - q
    sig = float(sigmoid(lam))
    prob = sig * q + (1.0 - sig) * (1.0 - q)
    prob = np.clip(prob, 1e-12, 1.0 - 1e-12)
    return np.log(prob) - np.log1p(-prob)


def _refresh_latent_prior(
    layers: list[SamplerState],
    k: int,
    arch: Architecture,
    smoothed: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> None:
    """Latent prior of layer k: message from layer k+1, or the scalar top prior.

    During joint burn-in the message is fed forward through smoothed running
    means of the upper layer's state: a freshly initialised upper layer has
    near-uniform means and sends almost no message, so the lower layer first
    organises against its own data. Once the upper layer stabilises, the
    message hardens towards the exact conditional (+/- lambda, per the upper
    Boolean product), which is also what a frozen upper layer sends.
    """
    st = layers[k]
    if k == len(layers) - 1:
        st.set_latent_prior_logits(np.full(st.z.shape, arch.z_prior.eta, dtype=np.float64))
        return
    above = layers[k + 1]
    if smoothed is not None:
        z_mean, u_mean = smoothed[k + 1]
        st.set_latent_prior_logits(_mean_field_logits(z_mean, u_mean, above.lambda_))
    else:
        prod = boolean_product(above.z.bits, above.u.bits)
        st.set_latent_prior_logits(above.lambda_ * (2.0 * prod.astype(np.float64) - 1.0))


def train_stack(x, architecture: Architecture, schedule: StackSchedule | None = None) -> LayerStack:
    """Train a stacked model and return per-layer posterior summaries.

    A single-layer stack reproduces the flat sampler exactly: same streams,
    same trace, same summary.
    """
    if schedule is None:
        schedule = StackSchedule()
    if schedule.threads is not None:
        set_threads(schedule.threads)
    if not isinstance(x, ObservedMatrix):
        x = ObservedMatrix(x)
    arch = architecture
    depth = arch.depth
    rng = np.random.default_rng(schedule.seed)

    # With no observed cells at all, maximising the dispersions is degenerate:
    # an upper layer can fit its own unanchored samples perfectly and lock the
    # whole stack into a self-confirming state. Pin the dispersions flat so
    # every layer reverts to its prior.
    vacuous = x.observed_count == 0

    layers: list[SamplerState] = []
    data = x
    for k in range(depth):
        base = (arch.configs[k] if arch.configs else None) or SamplerConfig()
        cfg = replace(
            base,
            burn_in=schedule.burn_in,
            samples=schedule.samples,
            seed=schedule.seed,
            prior_z=arch.z_prior,
            prior_u=arch.code_priors[k],
            convergence_tol=None,
            lambda_update=base.lambda_update and not vacuous,
            lambda_init=0.0 if vacuous else base.lambda_init,
        )
        width = arch.layer_widths[k]
        n, d = data.shape
        z = FactorMatrix(rng.integers(0, 2, size=(n, width), dtype=np.int8), "latent")
        u = FactorMatrix(rng.integers(0, 2, size=(d, width), dtype=np.int8), "code")
        st = SamplerState(data, z, u, cfg, matrix_id_z=2 * k, matrix_id_u=2 * k + 1)
        layers.append(st)
        data = ObservedMatrix(_signed(z.bits))

    traces = [PosteriorTrace(st.x.n_rows, st.x.n_cols, st.width) for st in layers]

    # running means of each layer's hard state, used to soften burn-in messages
    decay = 0.9
    smoothed = [
        (np.full(st.z.shape, 0.5), np.full(st.u.shape, 0.5)) for st in layers
    ]
    for _ in range(schedule.burn_in):
        for k in range(depth):
            if k > 0:
                layers[k].set_data(_signed(layers[k - 1].z.bits))
            _refresh_latent_prior(layers, k, arch, smoothed)
            sweep(layers[k], traces[k])
            z_bar, u_bar = smoothed[k]
            z_bar *= decay
            z_bar += (1 - decay) * layers[k].z.bits
            u_bar *= decay
            u_bar += (1 - decay) * layers[k].u.bits

    # each layer is then sampled against the same frozen scaffold: every other
    # layer held at the rounded running mean from burn-in with its current
    # dispersion, so the per-layer sampling runs are mutually independent
    scaffold = [
        ((z_bar >= 0.5).astype(np.int8), (u_bar >= 0.5).astype(np.int8))
        for z_bar, u_bar in smoothed
    ]
    scaffold_lambdas = [st.lambda_ for st in layers]
    summaries: list[PosteriorSummary | None] = [None] * depth
    for k in range(depth):
        if k > 0:
            layers[k].set_data(_signed(scaffold[k - 1][0]))
        if k == depth - 1:
            layers[k].set_latent_prior_logits(
                np.full(layers[k].z.shape, arch.z_prior.eta, dtype=np.float64)
            )
        else:
            z_fix, u_fix = scaffold[k + 1]
            prod = boolean_product(z_fix, u_fix)
            layers[k].set_latent_prior_logits(
                scaffold_lambdas[k + 1] * (2.0 * prod.astype(np.float64) - 1.0)
            )
        for _ in range(schedule.samples):
            sweep(layers[k], traces[k])
        summaries[k] = summarize(layers[k], traces[k])
        layers[k].z.bits[:] = summaries[k].z_map
        layers[k].u.bits[:] = summaries[k].u_map

    return LayerStack(layers, arch, schedule, summaries, x)


def feed_forward(stack: LayerStack, level: int, one_hot: int | None = None, activation=None) -> np.ndarray:
    """Propagate a latent activation at the given level down to the data layer.

    `level` counts latent levels from 1 (bottom). The activation is either a
    one-hot index or an explicit vector of Bernoulli means. Each step mixes
    the mean-field Boolean product through that layer's dispersion:
    out = sigma(lambda) * q + (1 - sigma(lambda)) * (1 - q).
    """
    if not 1 <= level <= stack.depth:
        raise IndexError(f"level {level} outside 1..{stack.depth}")
    width = stack.architecture.layer_widths[level - 1]
    if activation is not None:
        m = np.asarray(activation, dtype=np.float64)
        if m.shape != (width,):
            raise ValueError(f"activation must have shape ({width},)")
        if (m < 0).any() or (m > 1).any():
            raise ValueError("activation means must lie in [0, 1]")
    else:
        if one_hot is None or not 0 <= one_hot < width:
            raise IndexError(f"one_hot index {one_hot} outside 0..{width - 1}")
        m = np.zeros(width, dtype=np.float64)
        m[one_hot] = 1.0
    for j in range(level - 1, -1, -1):
        summ = stack.summaries[j]
        u_mean = summ.u_mean
        q = 1.0 - np.prod(1.0 - m[np.newaxis, :] * u_mean, axis=1)
        sig = float(sigmoid(summ.lambda_final.value))
        m = sig * q + (1.0 - sig) * (1.0 - q)
    return m


def impute(stack: LayerStack, x=None) -> PredictionReport:
    """Plug-in predictions for the missing cells of `x` (default: training data),
    using the bottom layer's posterior means as trained jointly with the stack."""
    if x is None:
        x = stack.data
    elif not isinstance(x, ObservedMatrix):
        x = ObservedMatrix(x)
    if x.shape != stack.data.shape:
        raise ValueError(f"data shape {x.shape} != stack bottom shape {stack.data.shape}")
    cells = np.argwhere(x.trits == 0)
    bottom = stack.summaries[0]
    if len(cells) == 0:
        return PredictionReport.from_probabilities(cells.reshape(0, 2), np.empty(0))
    probs = predict_plugin(bottom.z_mean, bottom.u_mean, bottom.lambda_final.value, cells)
    return PredictionReport.from_probabilities(cells, probs)
