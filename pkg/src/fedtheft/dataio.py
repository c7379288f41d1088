"""Loading, synthesizing, cleaning, normalizing and splitting meter data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng

LABEL_COLUMN = "label"


class DataError(ValueError):
    """Malformed input data or a dataset that violates its contract."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    missing_mask: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        m = np.asarray(self.missing_mask, dtype=bool)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        if m.shape != x.shape:
            raise DataError(f"missing_mask shape {m.shape} != features shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"labels length {y.shape} != number of rows {x.shape[0]}")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        names = list(self.feature_names) or [f"f{j}" for j in range(x.shape[1])]
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} feature names for {x.shape[1]} columns")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "missing_mask", m)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.missing_mask[rows], self.feature_names)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.missing_mask, other.missing_mask)
        )


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def d(self) -> int:
        return self.mean.shape[0]


def load_csv(path) -> Dataset:
    """Read a CSV with a ``label`` column; empty cells are treated as missing.

    Errors carry the 1-based file line and the column name of the bad cell.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, no header row") from None
        header = [h.strip() for h in header]
        if LABEL_COLUMN not in header:
            raise DataError(f"{path}: line 1: no '{LABEL_COLUMN}' column in header")
        label_col = header.index(LABEL_COLUMN)
        feat_cols = [j for j in range(len(header)) if j != label_col]
        names = [header[j] for j in feat_cols]

        rows: list[list[float]] = []
        masks: list[list[bool]] = []
        labels: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line_no}: expected {len(header)} cells, got {len(row)}")
            raw_label = row[label_col].strip()
            try:
                label = float(raw_label)
            except ValueError:
                raise DataError(
                    f"{path}: line {line_no}, column '{LABEL_COLUMN}': label {raw_label!r} is not 0 or 1"
                ) from None
            if label not in (0.0, 1.0):
                raise DataError(
                    f"{path}: line {line_no}, column '{LABEL_COLUMN}': label {raw_label!r} is not 0 or 1"
                )
            values = []
            mask = []
            for j in feat_cols:
                cell = row[j].strip()
                if cell == "":
                    values.append(0.0)
                    mask.append(True)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}, column '{header[j]}': non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: line {line_no}, column '{header[j]}': non-finite value {cell!r}")
                values.append(v)
                mask.append(False)
            rows.append(values)
            masks.append(mask)
            labels.append(int(label))

    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_cols)),
        np.array(labels, dtype=np.int64),
        np.array(masks, dtype=bool).reshape(len(rows), len(feat_cols)),
        names,
    )


def format_float(v: float) -> str:
    return "%.17g" % v


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` in the schema read by :func:`load_csv` (label last)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.feature_names, LABEL_COLUMN])
        for x, m, y in zip(data.features, data.missing_mask, data.labels):
            w.writerow([*("" if miss else format_float(v) for v, miss in zip(x.tolist(), m.tolist())), int(y)])


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_synthetic(
    n: int, d: int, theft_rate: float = 0.09, missing_rate: float = 0.0, seed: int = 0
) -> Dataset:
    """Synthetic daily-consumption records with a suppression signature for thieves.

    Honest customers follow a seasonal sinusoid around a per-customer base
    load, plus multiplicative day-to-day noise. Thieves follow the same kind
    of profile but a contiguous window covering a quarter to two thirds of
    the period is scaled by a factor drawn from [0.1, 0.5].
    """
    if n < 10:
        raise DataError(f"n must be >= 10, got {n}")
    if d < 2:
        raise DataError(f"d must be >= 2, got {d}")
    if not 0.0 < theft_rate < 1.0:
        raise DataError(f"theft_rate must lie in (0, 1), got {theft_rate}")
    if not 0.0 <= missing_rate < 1.0:
        raise DataError(f"missing_rate must lie in [0, 1), got {missing_rate}")

    g = _rng.stream(seed, _rng.SYNTH)
    n_theft = round_half_up(n * theft_rate)
    labels = np.zeros(n, dtype=np.int64)
    labels[g.permutation(n)[:n_theft]] = 1

    t = np.arange(d, dtype=np.float64)
    base = g.lognormal(mean=1.5, sigma=0.25, size=(n, 1))
    amp = g.uniform(0.1, 0.3, size=(n, 1))
    phase = g.uniform(0.0, 2.0 * np.pi, size=(n, 1))
    period = 365.0 if d >= 365 else float(d)
    profile = base * (1.0 + amp * np.sin(2.0 * np.pi * t / period + phase))
    x = profile * g.lognormal(mean=0.0, sigma=0.15, size=(n, d))

    thieves = np.flatnonzero(labels)
    lo = max(1, d // 4)
    hi = max(lo, (2 * d) // 3)
    lengths = g.integers(lo, hi + 1, size=thieves.size)
    starts = g.integers(0, d - lengths + 1)
    factors = g.uniform(0.1, 0.5, size=thieves.size)
    for i, s, ln, f in zip(thieves, starts, lengths, factors):
        x[i, s : s + ln] *= f

    n_missing = round_half_up(n * d * missing_rate)
    mask = np.zeros(n * d, dtype=bool)
    mask[g.choice(n * d, size=n_missing, replace=False)] = True
    mask = mask.reshape(n, d)
    x[mask] = 0.0
    return Dataset(x, labels, mask, [f"day_{j}" for j in range(d)])


def fit_norm_stats(data: Dataset) -> NormStats:
    """Per-feature mean and population std over observed cells only.

    Features with std below 1e-12 get std 1 so they map to 0 after z-scoring.
    """
    if data.n < 2:
        raise DataError(f"need at least 2 rows to fit normalization, got {data.n}")
    observed = ~data.missing_mask
    counts = observed.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DataError(f"feature '{data.feature_names[empty[0]]}' has no observed values")
    x = np.where(observed, data.features, 0.0)
    mean = x.sum(axis=0) / counts
    dev = np.where(observed, data.features - mean, 0.0)
    std = np.sqrt((dev * dev).sum(axis=0) / counts)
    std = np.where(std < 1e-12, 1.0, std)
    return NormStats(mean, std)


def _check_dims(data: Dataset, stats: NormStats) -> None:
    if stats.d != data.d:
        raise DataError(f"statistics fitted on d={stats.d} features, data has d={data.d}")


def impute_missing(data: Dataset, stats: NormStats) -> Dataset:
    _check_dims(data, stats)
    x = np.where(data.missing_mask, stats.mean, data.features)
    return Dataset(x, data.labels, np.zeros_like(data.missing_mask), data.feature_names)


def apply_zscore(data: Dataset, stats: NormStats) -> Dataset:
    _check_dims(data, stats)
    if data.missing_mask.any():
        raise DataError("impute missing values before z-scoring")
    return Dataset((data.features - stats.mean) / stats.std, data.labels, data.missing_mask, data.feature_names)


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    # rounding guards against e.g. 0.7*10 = 7.000000000000001
    n_train = math.ceil(round(n * (1.0 - test_fraction), 9))
    if n_train <= 0 or n_train >= n:
        raise DataError(f"split of {n} rows at test_fraction={test_fraction} leaves one side empty")
    perm = np.random.Generator(np.random.PCG64(seed & _rng.MASK64)).permutation(n)
    return perm[:n_train], perm[n_train:]


def train_test_split(data: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(data.n, test_fraction, seed)
    return data.take(train_idx), data.take(test_idx)
