"""Dataset ingestion and persistence: matrix file formats, MovieLens loading,
global-mean binarisation, and train/test splits over observed ratings."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DegenerateError, ObservedMatrix

__all__ = [
    "RatingsTable",
    "SplitResult",
    "binarize_global_mean",
    "load_matrix",
    "load_movielens",
    "observe_fraction_split",
    "save_matrix",
    "save_summary",
]

logger = logging.getLogger(__name__)

_MAGIC = b"ORM1"
_SEPARATORS = {"100k": "\t", "1m": "::"}


@dataclass
class RatingsTable:
    """Integer ratings with contiguous 0-based user/item index maps."""

    users: np.ndarray  # original user ids, first-appearance order
    items: np.ndarray  # original item ids, first-appearance order
    entries: np.ndarray  # (m, 3) columns: user index, item index, rating

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_ratings(self) -> int:
        return len(self.entries)

    def global_mean(self) -> float:
        if self.n_ratings == 0:
            raise DegenerateError("ratings table is empty")
        return float(self.entries[:, 2].mean())


def load_movielens(path, fmt: str) -> RatingsTable:
    """Parse a MovieLens ratings file of the given format ('100k' or '1m').

    Duplicate (user, item) pairs keep the last rating seen; index maps follow
    first appearance.
    """
    if fmt not in _SEPARATORS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(_SEPARATORS)}")
    sep = _SEPARATORS[fmt]
    path = Path(path)
    user_index: dict[int, int] = {}
    item_index: dict[int, int] = {}
    ratings: dict[tuple[int, int], int] = {}
    duplicates = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(sep)
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                user, item, rating = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer field ({exc})") from None
            if rating not in (1, 2, 3, 4, 5):
                raise ValueError(f"{path}:{lineno}: rating {rating} outside 1..5")
            u = user_index.setdefault(user, len(user_index))
            i = item_index.setdefault(item, len(item_index))
            if (u, i) in ratings:
                duplicates += 1
            ratings[(u, i)] = rating
    if duplicates:
        logger.warning("%s: %d duplicate (user, item) pairs; kept last occurrence", path, duplicates)
    entries = np.array([(u, i, r) for (u, i), r in ratings.items()], dtype=np.int64)
    table = RatingsTable(
        users=np.fromiter(user_index.keys(), dtype=np.int64, count=len(user_index)),
        items=np.fromiter(item_index.keys(), dtype=np.int64, count=len(item_index)),
        entries=entries,
    )
    logger.info(
        "%s: %d ratings, %d users, %d items", path, table.n_ratings, table.n_users, table.n_items
    )
    return table


def binarize_global_mean(table: RatingsTable) -> ObservedMatrix:
    """Users x items trit matrix: +1 above the global mean rating, -1 otherwise.

    Ratings equal to the mean fall to the negative class; unrated pairs are
    missing.
    """
    mean = table.global_mean()
    trits = np.zeros((table.n_users, table.n_items), dtype=np.int8)
    u, i, r = table.entries[:, 0], table.entries[:, 1], table.entries[:, 2]
    trits[u, i] = np.where(r > mean, 1, -1).astype(np.int8)
    return ObservedMatrix(trits)


@dataclass
class SplitResult:
    """Training matrix plus the held-back observed cells with their true bits."""

    train: ObservedMatrix
    test_cells: np.ndarray  # (k, 2)
    test_truths: np.ndarray  # (k,) bits


def observe_fraction_split(x, fraction: float, seed: int = 0) -> SplitResult:
    """Split the observed cells uniformly: keep round(fraction * observed) for
    training, hold back the rest with their true values."""
    if not isinstance(x, ObservedMatrix):
        x = ObservedMatrix(x)
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly in (0, 1)")
    observed = np.argwhere(x.trits != 0)
    total = len(observed)
    if total < 1:
        raise DegenerateError("matrix has no observed cells to split")
    keep = int(round(fraction * total))
    if keep < 1 or keep >= total:
        raise DegenerateError(f"fraction {fraction} makes an empty split side ({keep}/{total})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    train_idx = observed[order[:keep]]
    test_idx = observed[order[keep:]]
    trits = np.zeros_like(x.trits)
    trits[train_idx[:, 0], train_idx[:, 1]] = x.trits[train_idx[:, 0], train_idx[:, 1]]
    truths = (x.trits[test_idx[:, 0], test_idx[:, 1]] == 1).astype(np.int8)
    return SplitResult(ObservedMatrix(trits), test_idx, truths)


def _to_trits(matrix) -> np.ndarray:
    if isinstance(matrix, ObservedMatrix):
        return matrix.trits
    arr = np.asarray(matrix)
    if np.isin(arr, (0, 1)).all():
        return (2 * arr.astype(np.int16) - 1).astype(np.int8)
    return ObservedMatrix(arr).trits


def save_matrix(path, matrix, fmt: str | None = None) -> None:
    """Write a trit matrix as text CSV ({0,1,?} cells) or compact binary.

    The format defaults to binary for a '.orm' suffix and CSV otherwise.
    Binary layout: magic 'ORM1', little-endian u64 rows and cols, then one
    byte per cell in {0, 1, 2} with 2 meaning missing.
    """
    path = Path(path)
    trits = _to_trits(matrix)
    n, d = trits.shape
    if fmt is None:
        fmt = "binary" if path.suffix == ".orm" else "csv"
    if fmt == "csv":
        cell = np.array(["0", "?", "1"])  # index by trit + 1: -1 zero, 0 missing, +1 one
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("rows,cols\n")
            fh.write(f"{n},{d}\n")
            for row in trits:
                fh.write(",".join(cell[row + 1]) + "\n")
    elif fmt == "binary":
        body = np.where(trits == 0, 2, np.where(trits == 1, 1, 0)).astype(np.uint8)
        with path.open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQ", n, d))
            fh.write(body.tobytes())
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def load_matrix(path, fmt: str | None = None) -> ObservedMatrix:
    """Read a matrix written by `save_matrix`; the format is sniffed from the
    magic bytes when not given."""
    path = Path(path)
    if fmt is None:
        with path.open("rb") as fh:
            fmt = "binary" if fh.read(4) == _MAGIC else "csv"
    if fmt == "binary":
        raw = path.read_bytes()
        if raw[:4] != _MAGIC:
            raise ValueError(f"{path}: bad magic {raw[:4]!r}")
        if len(raw) < 20:
            raise ValueError(f"{path}: truncated header")
        n, d = struct.unpack("<QQ", raw[4:20])
        body = np.frombuffer(raw[20:], dtype=np.uint8)
        if body.size != n * d:
            raise ValueError(f"{path}: payload holds {body.size} cells, expected {n * d}")
        if (body > 2).any():
            raise ValueError(f"{path}: cell bytes outside {{0,1,2}}")
        trits = np.array([-1, 1, 0], dtype=np.int8)[body].reshape(n, d)
        return ObservedMatrix(trits)
    if fmt == "csv":
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "rows,cols":
                raise ValueError(f"{path}: bad CSV header {header!r}")
            dims = fh.readline().strip().split(",")
            if len(dims) != 2:
                raise ValueError(f"{path}: bad dimension line")
            n, d = int(dims[0]), int(dims[1])
            value = {"?": 0, "0": -1, "1": 1}
            rows = []
            for lineno, line in enumerate(fh, start=3):
                line = line.strip()
                if not line:
                    continue
                cells = line.split(",")
                if len(cells) != d:
                    raise ValueError(f"{path}:{lineno}: expected {d} cells, got {len(cells)}")
                try:
                    rows.append([value[c] for c in cells])
                except KeyError as exc:
                    raise ValueError(f"{path}:{lineno}: bad cell {exc}") from None
        if len(rows) != n:
            raise ValueError(f"{path}: expected {n} rows, got {len(rows)}")
        return ObservedMatrix(np.array(rows, dtype=np.int8))
    raise ValueError(f"unknown matrix format {fmt!r}")


def _write_float_csv(path: Path, array: np.ndarray) -> None:
    n, d = array.shape
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("rows,cols\n")
        fh.write(f"{n},{d}\n")
        for row in array:
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")


def save_summary(outdir, summary) -> dict[str, Path]:
    """Write a posterior summary as a directory of flat files.

    Posterior means go to CSV at six decimals, MAP factors to both matrix
    formats, the dispersion trace to CSV, and the run settings to a
    key=value report.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for name, arr in (("z_mean", summary.z_mean), ("u_mean", summary.u_mean)):
        paths[name] = outdir / f"{name}.csv"
        _write_float_csv(paths[name], arr)
    for name, arr in (("z_map", summary.z_map), ("u_map", summary.u_map)):
        paths[name] = outdir / f"{name}.csv"
        save_matrix(paths[name], arr, fmt="csv")
        paths[name + "_bin"] = outdir / f"{name}.orm"
        save_matrix(paths[name + "_bin"], arr, fmt="binary")
    paths["lambda_trace"] = outdir / "lambda_trace.csv"
    with paths["lambda_trace"].open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("sweep,lambda\n")
        for i, lam in enumerate(summary.lambda_trace):
            fh.write(f"{i},{lam:.10g}\n")
    cfg = summary.config
    n, d, width = summary.shape
    paths["report"] = outdir / "report.txt"
    with paths["report"].open("w", encoding="utf-8", newline="\n") as fh:
        for key, val in (
            ("rows", n),
            ("cols", d),
            ("rank", width),
            ("seed", cfg.seed),
            ("burn_in", cfg.burn_in),
            ("samples", cfg.samples),
            ("prior_z", cfg.prior_z.p),
            ("prior_u", cfg.prior_u.p),
            ("lambda_max", cfg.lambda_max),
            ("lambda_final", summary.lambda_final.value),
            ("sigma_final", summary.lambda_final.sigma),
            ("n_samples", summary.n_samples),
        ):
            fh.write(f"{key}={val}\n")
    return paths
