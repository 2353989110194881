"""Domain types and exact likelihood bookkeeping for Boolean matrix factorisation.

Observations are ternary ("trits"): -1 observed zero, 0 missing, +1 observed
one. Factor matrices are binary, with a signed {-1, +1} view used by the
likelihood algebra. A single global dispersion parameter lambda sets the
probability sigma(lambda) that an observed cell agrees with the deterministic
Boolean product of the factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit
from scipy.special import logit as _logit

from . import _kernels

__all__ = [
    "LAMBDA_MAX",
    "BernoulliPrior",
    "DegenerateError",
    "Dispersion",
    "FactorMatrix",
    "ObservedMatrix",
    "boolean_product",
    "count_correct",
    "deterministic_residual",
    "log_likelihood",
    "logit",
    "sigmoid",
]

#: Cap for the dispersion parameter: logit(1 - 1e-6). The MLE is unbounded
#: when every observed cell is predicted correctly.
LAMBDA_MAX = float(_logit(1.0 - 1e-6))


class DegenerateError(ValueError):
    """Raised when an input is too degenerate to compute with (e.g. no observed cells)."""


def sigmoid(x):
    """Logistic function, numerically stable for large |x|."""
    return expit(x)


def logit(p):
    """Inverse of the logistic function."""
    return _logit(p)


def _as_trits(x) -> np.ndarray:
    if isinstance(x, ObservedMatrix):
        return x.trits
    arr = np.asarray(x, dtype=np.int8)
    return arr


def _as_bits(x) -> np.ndarray:
    if isinstance(x, FactorMatrix):
        return x.bits
    return np.asarray(x, dtype=np.int8)


class ObservedMatrix:
    """N x D ternary observation matrix: -1 zero, 0 missing, +1 one."""

    def __init__(self, trits):
        arr = np.ascontiguousarray(trits, dtype=np.int8)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"observation matrix must be 2-D and nonempty, got shape {arr.shape}")
        bad = np.abs(arr) > 1
        if bad.any():
            raise ValueError("observation cells must lie in {-1, 0, +1}")
        self.trits = arr
        self.observed_count = int(np.count_nonzero(arr))

    @classmethod
    def from_binary(cls, x, missing_mask=None) -> "ObservedMatrix":
        """Build from a {0,1} matrix; cells under `missing_mask` become missing."""
        x = np.asarray(x)
        if not np.isin(x, (0, 1)).all():
            raise ValueError("binary observation matrix must be {0,1}-valued")
        trits = (2 * x.astype(np.int16) - 1).astype(np.int8)
        if missing_mask is not None:
            trits = np.where(np.asarray(missing_mask, dtype=bool), np.int8(0), trits)
        return cls(trits)

    @property
    def shape(self) -> tuple[int, int]:
        return self.trits.shape

    @property
    def n_rows(self) -> int:
        return self.trits.shape[0]

    @property
    def n_cols(self) -> int:
        return self.trits.shape[1]

    @property
    def missing_mask(self) -> np.ndarray:
        return self.trits == 0

    def density(self) -> float:
        """Fraction of ones among the observed cells."""
        if self.observed_count == 0:
            raise DegenerateError("density is undefined without observed cells")
        return float(np.count_nonzero(self.trits == 1)) / self.observed_count

    def __eq__(self, other) -> bool:
        return isinstance(other, ObservedMatrix) and np.array_equal(self.trits, other.trits)

    def __repr__(self) -> str:
        n, d = self.shape
        return f"ObservedMatrix({n}x{d}, observed={self.observed_count})"


class FactorMatrix:
    """Binary factor matrix: latent assignments (rows = observations) or codes (rows = features)."""

    def __init__(self, bits, role: str = "latent"):
        arr = np.ascontiguousarray(bits, dtype=np.int8)
        if arr.ndim != 2:
            raise ValueError(f"factor matrix must be 2-D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("factor cells must lie in {0, 1}")
        if role not in ("latent", "code"):
            raise ValueError(f"role must be 'latent' or 'code', got {role!r}")
        self.bits = arr
        self.role = role

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def n_rows(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def signed(self) -> np.ndarray:
        """The {-1, +1} view: 2b - 1."""
        return (2 * self.bits - 1).astype(np.int8)

    def copy(self) -> "FactorMatrix":
        return FactorMatrix(self.bits.copy(), role=self.role)

    def __repr__(self) -> str:
        n, l = self.shape
        return f"FactorMatrix({self.role}, {n}x{l})"


@dataclass(frozen=True)
class Dispersion:
    """Global noise level on the logit scale; sigma(value) is the agreement probability."""

    value: float
    lambda_max: float = LAMBDA_MAX

    def __post_init__(self):
        if not 0.0 <= self.value <= self.lambda_max:
            raise ValueError(f"dispersion must lie in [0, {self.lambda_max:.4f}], got {self.value}")

    @property
    def sigma(self) -> float:
        return float(expit(self.value))


@dataclass(frozen=True)
class BernoulliPrior:
    """Independent Bernoulli prior on factor entries."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"prior probability must lie strictly in (0, 1), got {self.p}")

    @property
    def eta(self) -> float:
        """Prior log-odds of an entry being 1."""
        return float(_logit(self.p))


def boolean_product(z, u) -> np.ndarray:
    """Boolean matrix product: entry (n, d) is 1 iff some l has z[n,l] = u[d,l] = 1."""
    zb = _as_bits(z)
    ub = _as_bits(u)
    if zb.shape[1] != ub.shape[1]:
        raise ValueError(f"factor widths differ: {zb.shape[1]} vs {ub.shape[1]}")
    return _kernels.boolean_product(np.ascontiguousarray(zb), np.ascontiguousarray(ub))


def deterministic_residual(x: int, z_row, u_col) -> int:
    """Signed agreement of one cell with the Boolean product of its factor rows.

    +1: the product predicts the observed value, -1: it contradicts it,
    0: the cell is missing.
    """
    z_row = np.asarray(z_row)
    u_col = np.asarray(u_col)
    if z_row.shape != u_col.shape:
        raise ValueError("factor rows must have equal length")
    active = bool(np.any((z_row == 1) & (u_col == 1)))
    return int(x) * (1 if active else -1)


def count_correct(x, z, u) -> int:
    """Number of observed cells correctly predicted by the Boolean product."""
    trits = _as_trits(x)
    zb = _as_bits(z)
    ub = _as_bits(u)
    if trits.shape != (zb.shape[0], ub.shape[0]) or zb.shape[1] != ub.shape[1]:
        raise ValueError(
            f"inconsistent shapes: observations {trits.shape}, latents {zb.shape}, codes {ub.shape}"
        )
    return int(
        _kernels.count_correct(
            np.ascontiguousarray(trits), np.ascontiguousarray(zb), np.ascontiguousarray(ub)
        )
    )


def log_likelihood(x, z, u, lam: float) -> float:
    """Log-likelihood of the observed cells given factors and dispersion.

    Missing cells contribute a constant factor that is dropped.
    """
    if lam < 0:
        raise ValueError(f"dispersion must be nonnegative, got {lam}")
    trits = _as_trits(x)
    observed = int(np.count_nonzero(trits))
    p = count_correct(trits, z, u)
    return float(p * log_expit(lam) + (observed - p) * log_expit(-lam))
