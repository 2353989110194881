"""Synthetic benchmark generators: random Boolean-product matrices, bit-flip
noise, random masking, and the seven-segment calculator digits toy set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BernoulliPrior, DegenerateError, ObservedMatrix, boolean_product

__all__ = [
    "DigitsDataset",
    "MaskedSplit",
    "SyntheticSpec",
    "apply_bitflip_noise",
    "calculator_digits",
    "density_to_bernoulli",
    "digit_segment_membership",
    "empirical_bayes_prior",
    "gen_random_boolean",
    "mask_random",
    "segment_bitmaps",
]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for one random factorisation/completion instance."""

    n: int
    d: int
    rank: int
    target_density: float = 0.5
    flip_prob: float = 0.0
    observed_fraction: float = 1.0
    seed: int = 0
    bernoulli_p: float | None = None  # overrides target_density when set

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.rank < 1:
            raise ValueError("n, d and rank must be >= 1")
        if not 0.0 < self.target_density < 1.0:
            raise ValueError("target_density must lie in (0, 1)")
        if not 0.0 <= self.flip_prob <= 0.5:
            raise ValueError("flip_prob must lie in [0, 1/2]")
        if not 0.0 < self.observed_fraction <= 1.0:
            raise ValueError("observed_fraction must lie in (0, 1]")
        if self.bernoulli_p is not None and not 0.0 <= self.bernoulli_p <= 1.0:
            raise ValueError("bernoulli_p must lie in [0, 1]")


def density_to_bernoulli(width: int, target_density: float) -> float:
    """Factor-entry probability p with 1 - (1 - p^2)^width equal to the target.

    The Boolean product of two i.i.d. Bernoulli(p) factor matrices of the
    given width then has the target expected density.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if not 0.0 < target_density < 1.0:
        raise ValueError("target_density must lie in (0, 1)")
    return float(np.sqrt(1.0 - (1.0 - target_density) ** (1.0 / width)))


def empirical_bayes_prior(x, width: int) -> BernoulliPrior:
    """Bernoulli prior whose parameter back-solves the observed data density."""
    if not isinstance(x, ObservedMatrix):
        x = ObservedMatrix(x)
    return BernoulliPrior(density_to_bernoulli(width, _clip_unit(x.density())))


def _clip_unit(p: float, eps: float = 1e-9) -> float:
    return min(max(p, eps), 1.0 - eps)


def gen_random_boolean(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random Boolean-product matrix with its generating factors.

    Returns (x_clean, z_true, u_true); x_clean is {0,1}-valued and equals
    the Boolean product of the factors exactly.
    """
    p = spec.bernoulli_p if spec.bernoulli_p is not None else density_to_bernoulli(
        spec.rank, spec.target_density
    )
    rng = np.random.default_rng(spec.seed)
    z = (rng.random((spec.n, spec.rank)) < p).astype(np.int8)
    u = (rng.random((spec.d, spec.rank)) < p).astype(np.int8)
    return boolean_product(z, u), z, u


def apply_bitflip_noise(x, flip_prob: float, seed: int = 0) -> np.ndarray:
    """Complement each cell independently with the given probability.

    Only defined for fully observed binary matrices: noise precedes masking.
    """
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError("flip_prob must lie in [0, 1]")
    if isinstance(x, ObservedMatrix):
        if x.missing_mask.any():
            raise ValueError("bit-flip noise requires a fully observed matrix")
        arr = ((x.trits + 1) // 2).astype(np.int8)
    else:
        arr = np.asarray(x)
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("bit-flip noise requires a {0,1} matrix")
        arr = arr.astype(np.int8)
    rng = np.random.default_rng(seed)
    flips = rng.random(arr.shape) < flip_prob
    return np.where(flips, 1 - arr, arr).astype(np.int8)


@dataclass
class MaskedSplit:
    """An observation matrix with held-back cells and their true values."""

    observed: ObservedMatrix
    hidden_cells: np.ndarray  # (k, 2) row/col indices
    hidden_truths: np.ndarray  # (k,) bits


def mask_random(x, observed_fraction: float, seed: int = 0) -> MaskedSplit:
    """Keep an exact uniform subset of cells observed; hide the rest.

    Exactly round(observed_fraction * N * D) cells stay observed, drawn
    without replacement, so tiny fractions are reproducible with no
    variance in the observed count.
    """
    if not 0.0 < observed_fraction <= 1.0:
        raise ValueError("observed_fraction must lie in (0, 1]")
    arr = np.asarray(x)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("masking expects a fully observed {0,1} matrix")
    arr = arr.astype(np.int8)
    n, d = arr.shape
    total = n * d
    keep = int(round(observed_fraction * total))
    if keep < 1:
        raise DegenerateError(
            f"observed fraction {observed_fraction} keeps zero of {total} cells"
        )
    rng = np.random.default_rng(seed)
    kept_flat = rng.choice(total, size=keep, replace=False)
    observed_mask = np.zeros(total, dtype=bool)
    observed_mask[kept_flat] = True
    observed_mask = observed_mask.reshape(n, d)
    trits = np.where(observed_mask, (2 * arr - 1).astype(np.int8), np.int8(0))
    hidden_cells = np.argwhere(~observed_mask)
    hidden_truths = arr[~observed_mask]
    return MaskedSplit(ObservedMatrix(trits), hidden_cells, hidden_truths)


# Seven-segment geometry: three horizontal bars of width (width - 2) at the
# top, middle and bottom rows, and four one-pixel vertical half-height bars
# inset by one pixel from the horizontal rows. Segment order:
# top, top-right, bottom-right, bottom, bottom-left, top-left, middle.
_SEGMENT_NAMES = ("top", "top_right", "bottom_right", "bottom", "bottom_left", "top_left", "middle")

_DIGIT_SEGMENTS = np.array(
    [
        [1, 1, 1, 1, 1, 1, 0],  # 0
        [0, 1, 1, 0, 0, 0, 0],  # 1
        [1, 1, 0, 1, 1, 0, 1],  # 2
        [1, 1, 1, 1, 0, 0, 1],  # 3
        [0, 1, 1, 0, 0, 1, 1],  # 4
        [1, 0, 1, 1, 0, 1, 1],  # 5
        [1, 0, 1, 1, 1, 1, 1],  # 6
        [1, 1, 1, 0, 0, 0, 0],  # 7
        [1, 1, 1, 1, 1, 1, 1],  # 8
        [1, 1, 1, 1, 0, 1, 1],  # 9
    ],
    dtype=np.int8,
)


def digit_segment_membership() -> np.ndarray:
    """10 x 7 matrix: which of the seven segments each digit uses."""
    return _DIGIT_SEGMENTS.copy()


def segment_bitmaps(height: int = 17, width: int = 10, orientation: str = "tall") -> np.ndarray:
    """The seven segment images, flattened to rows of length height * width."""
    if height < 5 or width < 3:
        raise ValueError(f"grid {height}x{width} too small to draw seven segments")
    if orientation not in ("tall", "wide"):
        raise ValueError(f"orientation must be 'tall' or 'wide', got {orientation!r}")
    mid = (height - 1) // 2
    segs = np.zeros((7, height, width), dtype=np.int8)
    segs[0, 0, 1 : width - 1] = 1  # top
    segs[1, 1:mid, width - 1] = 1  # top-right
    segs[2, mid + 1 : height - 1, width - 1] = 1  # bottom-right
    segs[3, height - 1, 1 : width - 1] = 1  # bottom
    segs[4, mid + 1 : height - 1, 0] = 1  # bottom-left
    segs[5, 1:mid, 0] = 1  # top-left
    segs[6, mid, 1 : width - 1] = 1  # middle
    if orientation == "wide":
        segs = segs.transpose(0, 2, 1)
    return np.ascontiguousarray(segs.reshape(7, height * width))


@dataclass
class DigitsDataset:
    """Flattened seven-segment digit images with labels and generating structure."""

    matrix: np.ndarray  # (10 * copies, height * width) bits
    labels: np.ndarray  # (10 * copies,) digit per row
    segments: np.ndarray  # (7, height * width) bits
    membership: np.ndarray  # (10, 7) digit -> segment usage
    height: int
    width: int
    orientation: str


def calculator_digits(
    copies: int = 1,
    flip_prob: float = 0.0,
    height: int = 17,
    width: int = 10,
    orientation: str = "tall",
    seed: int = 0,
) -> DigitsDataset:
    """Digits 0-9 rendered as unions of their seven-segment bitmaps.

    Each round of `copies` contributes the ten digits in order; optional
    bit-flip noise is applied to the stacked matrix. The noiseless matrix
    has Boolean rank at most 7 by construction.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    segs = segment_bitmaps(height, width, orientation)
    digits = boolean_product(_DIGIT_SEGMENTS, segs.T.copy())
    matrix = np.tile(digits, (copies, 1))
    labels = np.tile(np.arange(10), copies)
    if flip_prob > 0:
        matrix = apply_bitflip_noise(matrix, flip_prob, seed)
    return DigitsDataset(
        matrix=matrix.astype(np.int8),
        labels=labels,
        segments=segs,
        membership=digit_segment_membership(),
        height=height,
        width=width,
        orientation=orientation,
    )
