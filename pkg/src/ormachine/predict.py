"""Completion and evaluation: predictive probabilities for unobserved cells,
reconstruction error, ROC points, and calibration splits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DegenerateError, boolean_product, sigmoid

__all__ = [
    "CalibrationSplit",
    "PredictionReport",
    "map_reconstruction",
    "predict_mc",
    "predict_plugin",
    "reconstruction_error",
    "roc_auc",
    "roc_curve",
    "calibration_split",
]


@dataclass
class PredictionReport:
    """Per-cell predictive probabilities with MAP values and optional scoring."""

    cells: np.ndarray  # (k, 2) row/col indices
    probabilities: np.ndarray  # (k,) in [0, 1]
    map_values: np.ndarray  # (k,) bits, probability >= threshold
    truths: np.ndarray | None = None  # (k,) bits
    threshold: float = 0.5
    confusion: dict[str, int] = field(init=False, default_factory=dict)

    def __post_init__(self):
        self.cells = np.asarray(self.cells)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if self.probabilities.size and not (
            (self.probabilities >= 0).all() and (self.probabilities <= 1).all()
        ):
            raise ValueError("probabilities must lie in [0, 1]")
        self.map_values = np.asarray(self.map_values, dtype=np.int8)
        if self.truths is not None:
            self.truths = np.asarray(self.truths, dtype=np.int8)
            t, m = self.truths, self.map_values
            self.confusion = {
                "tp": int(np.sum((m == 1) & (t == 1))),
                "fp": int(np.sum((m == 1) & (t == 0))),
                "tn": int(np.sum((m == 0) & (t == 0))),
                "fn": int(np.sum((m == 0) & (t == 1))),
            }

    @property
    def accuracy(self) -> float:
        if self.truths is None:
            raise ValueError("no ground truth attached")
        if self.truths.size == 0:
            raise DegenerateError("no cells to score")
        return float(np.mean(self.map_values == self.truths))

    @classmethod
    def from_probabilities(cls, cells, probabilities, truths=None, threshold: float = 0.5):
        probabilities = np.asarray(probabilities, dtype=np.float64)
        return cls(
            cells=cells,
            probabilities=probabilities,
            map_values=(probabilities >= threshold).astype(np.int8),
            truths=truths,
            threshold=threshold,
        )


def predict_plugin(z_mean, u_mean, lambda_hat: float, cells=None) -> np.ndarray:
    """Predictive probabilities from posterior means plugged into the model.

    q = 1 - prod_l (1 - z_mean * u_mean) is the chance the Boolean product
    is on; the cell probability is sigma(lambda) * q + (1 - sigma(lambda)) * (1 - q).
    Returns the full matrix when `cells` is None.
    """
    z_mean = np.asarray(z_mean, dtype=np.float64)
    u_mean = np.asarray(u_mean, dtype=np.float64)
    if (z_mean < 0).any() or (z_mean > 1).any() or (u_mean < 0).any() or (u_mean > 1).any():
        raise ValueError("posterior means must lie in [0, 1]")
    sig = float(sigmoid(lambda_hat))
    if cells is None:
        miss = np.ones((z_mean.shape[0], u_mean.shape[0]))
        for l in range(z_mean.shape[1]):
            miss *= 1.0 - np.outer(z_mean[:, l], u_mean[:, l])
        q = 1.0 - miss
    else:
        cells = np.asarray(cells)
        zc = z_mean[cells[:, 0], :]
        uc = u_mean[cells[:, 1], :]
        q = 1.0 - np.prod(1.0 - zc * uc, axis=1)
    return sig * q + (1.0 - sig) * (1.0 - q)


def map_reconstruction(z_mean, u_mean, lambda_hat: float, threshold: float = 0.5) -> np.ndarray:
    """Binary reconstruction: plug-in predictive probabilities thresholded at 1/2
    (ties to 1), i.e. each cell's posterior-mean probability rounded."""
    return (predict_plugin(z_mean, u_mean, lambda_hat) >= threshold).astype(np.int8)


def predict_mc(samples, lambda_hat: float, cells) -> np.ndarray:
    """Monte-Carlo predictive probabilities averaged over retained hard samples.

    Each sample contributes sigma(lambda) where its Boolean product predicts
    one and 1 - sigma(lambda) where it predicts zero.
    """
    if not samples:
        raise ValueError("no retained samples; rerun with sample retention enabled")
    cells = np.asarray(cells)
    sig = float(sigmoid(lambda_hat))
    acc = np.zeros(len(cells), dtype=np.float64)
    for z_bits, u_bits in samples:
        prod = boolean_product(z_bits, u_bits)
        on = prod[cells[:, 0], cells[:, 1]] == 1
        acc += np.where(on, sig, 1.0 - sig)
    return acc / len(samples)


def reconstruction_error(x_truth, x_hat, mask=None) -> float:
    """Fraction of (masked) cells where the two binary matrices disagree."""
    a = np.asarray(x_truth)
    b = np.asarray(x_hat)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a != b
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError(f"mask shape {mask.shape} != {a.shape}")
        if not mask.any():
            raise DegenerateError("mask selects no cells")
        diff = diff[mask]
    return float(np.mean(diff))


def roc_curve(probabilities, truths, thresholds=None) -> np.ndarray:
    """(FPR, TPR) pairs for thresholding the probabilities, one row per threshold.

    Thresholds default to the sorted unique probabilities bracketed by 0 and
    a value just above 1, so the curve always spans (1,1) down to (0,0).
    A prediction is positive when its probability is >= the threshold.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(truths, dtype=np.int8)
    if p.shape != t.shape:
        raise ValueError("probabilities and truths must have equal length")
    n_pos = int(np.sum(t == 1))
    n_neg = int(np.sum(t == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError(
            f"ROC needs both classes; got {n_pos} positives and {n_neg} negatives"
        )
    if thresholds is None:
        thresholds = np.concatenate(([0.0], np.unique(p), [np.nextafter(1.0, 2.0)]))
    thresholds = np.asarray(thresholds, dtype=np.float64)
    points = np.empty((len(thresholds), 2), dtype=np.float64)
    for i, thr in enumerate(thresholds):
        pred = p >= thr
        points[i, 0] = np.sum(pred & (t == 0)) / n_neg
        points[i, 1] = np.sum(pred & (t == 1)) / n_pos
    return points


def roc_auc(points: np.ndarray) -> float:
    """Area under a staircase of (FPR, TPR) points, by the trapezoid rule."""
    pts = np.asarray(points, dtype=np.float64)
    order = np.lexsort((pts[:, 1], pts[:, 0]))  # ties in FPR resolved by TPR
    fpr, tpr = pts[order, 0], pts[order, 1]
    return float(np.trapezoid(tpr, fpr))


@dataclass
class CalibrationSplit:
    """Histograms of predictive probabilities, split by MAP correctness."""

    correct_hist: np.ndarray
    incorrect_hist: np.ndarray
    bin_edges: np.ndarray

    def mean_abs_margin(self) -> tuple[float, float]:
        """Mean |p - 1/2| of correct and incorrect predictions (nan if empty)."""
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        margins = np.abs(centers - 0.5)

        def weighted(hist):
            total = hist.sum()
            return float(np.sum(hist * margins) / total) if total else float("nan")

        return weighted(self.correct_hist), weighted(self.incorrect_hist)


def calibration_split(probabilities, truths, bins: int = 50) -> CalibrationSplit:
    """Split cells by MAP correctness and histogram each side's probabilities."""
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(truths, dtype=np.int8)
    if p.size == 0:
        raise DegenerateError("nothing to calibrate")
    if p.shape != t.shape:
        raise ValueError("probabilities and truths must have equal length")
    map_vals = (p >= 0.5).astype(np.int8)
    correct = map_vals == t
    edges = np.linspace(0.0, 1.0, bins + 1)
    hist_c, _ = np.histogram(p[correct], bins=edges)
    hist_i, _ = np.histogram(p[~correct], bins=edges)
    return CalibrationSplit(hist_c, hist_i, edges)
