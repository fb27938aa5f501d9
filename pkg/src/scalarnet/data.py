"""Dataset ingestion, standardization, synthetic benchmark generation, and
train/test/CV splitting.

CSV files carry a header row and numeric cells only; the feature-group file
is JSON listing half-open [start, end) column intervals.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attention import FeatureGroupSpec
from .errors import ConfigError, DataError
from .tensor import Rng


@dataclass
class Scaler:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float


@dataclass
class Dataset:
    x: np.ndarray  # (n, p)
    y: np.ndarray  # (n,)
    feature_names: list
    spec: FeatureGroupSpec
    scaler: Scaler = None  # set once standardized

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass
class SplitPlan:
    train: np.ndarray
    test: np.ndarray
    folds: list  # list of index arrays partitioning `train`, or []
    seed: int


def load_groups(path) -> FeatureGroupSpec:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return FeatureGroupSpec(raw)


def load_csv(path, target_column: str, groups_path=None) -> Dataset:
    """Read a numeric CSV with a header row; the target column is removed
    from X. Without a groups file a single group [0, p) is assumed."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataError(f"{path}: no column named {target_column!r}")
        t_idx = header.index(target_column)
        rows = []
        for r, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: row {r} has {len(row)} cells, "
                                f"expected {len(header)}")
            vals = []
            for c, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {r}, "
                        f"column {header[c]!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(mat)):
        raise DataError(f"{path}: non-finite values present")
    y = mat[:, t_idx]
    x = np.delete(mat, t_idx, axis=1)
    names = [h for i, h in enumerate(header) if i != t_idx]
    p = x.shape[1]
    if groups_path is None:
        warnings.warn(f"no groups file given; assuming a single group [0, {p})")
        spec = FeatureGroupSpec([(0, p)])
    else:
        spec = load_groups(groups_path)
        spec.validate_width(p)
    return Dataset(x=x, y=y, feature_names=names, spec=spec)


def write_csv(ds: Dataset, path, target_name: str = "y") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [target_name])
        for xi, yi in zip(ds.x, ds.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def standardize(ds: Dataset) -> Dataset:
    """Z-score X per column and y (population std); constant columns map to 0
    with std recorded as 1."""
    x_mean = ds.x.mean(axis=0)
    x_std = ds.x.std(axis=0)
    x_std = np.where(x_std == 0.0, 1.0, x_std)
    y_mean = float(ds.y.mean())
    y_std = float(ds.y.std()) or 1.0
    return replace(
        ds,
        x=(ds.x - x_mean) / x_std,
        y=(ds.y - y_mean) / y_std,
        scaler=Scaler(x_mean=x_mean, x_std=x_std, y_mean=y_mean, y_std=y_std),
    )


def standardize_with(ds: Dataset, scaler: Scaler) -> Dataset:
    """Apply an existing scaler (e.g. from a checkpoint) to raw data."""
    return replace(
        ds,
        x=(ds.x - scaler.x_mean) / scaler.x_std,
        y=(ds.y - scaler.y_mean) / scaler.y_std,
        scaler=scaler,
    )


def destandardize_predictions(y_std, scaler: Scaler) -> np.ndarray:
    return np.asarray(y_std, dtype=np.float64) * scaler.y_std + scaler.y_mean


def synth_nonlinear(
    n: int,
    spec: FeatureGroupSpec,
    noise_sigma: float,
    seed: int,
    amp_scale: float = 1.0,
    cross_strength: float = 1.0,
) -> Dataset:
    """Synthetic benchmark: standard-normal X, within-group tanh ridges plus
    one cross-group product interaction, plus Gaussian noise.

    y = sum_g a_g * tanh(X^(g) b_g) + c * (X^(1) u)(X^(2) v) + noise.
    Coefficients are drawn once from the seed, so generation is deterministic.
    """
    if spec.n_groups < 2:
        raise ConfigError("synthetic generator needs at least 2 feature groups")
    rng = Rng(seed)
    p = spec.n_features
    x = rng.normal((n, p))
    y = np.zeros(n)
    for s, e in spec.groups:
        b = rng.normal(e - s)
        b *= 1.5 / np.linalg.norm(b)
        a = amp_scale * (0.8 + 0.4 * rng.uniform())
        y += a * np.tanh(x[:, s:e] @ b)
    (s1, e1), (s2, e2) = spec.groups[0], spec.groups[1]
    u = rng.normal(e1 - s1)
    u /= np.linalg.norm(u)
    v = rng.normal(e2 - s2)
    v /= np.linalg.norm(v)
    y += cross_strength * (x[:, s1:e1] @ u) * (x[:, s2:e2] @ v)
    y += noise_sigma * rng.normal(n)
    names = [f"f{j}" for j in range(p)]
    return Dataset(x=x, y=y, feature_names=names, spec=spec)


def split(ds: Dataset, test_fraction: float, k_folds=None, seed: int = 0) -> SplitPlan:
    """Seeded shuffle split; optional k folds partitioning the training rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = ds.n
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n - n_test < 1:
        raise ConfigError(f"test_fraction={test_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    folds = []
    if k_folds is not None:
        if k_folds < 2:
            raise ConfigError(f"k_folds must be >= 2, got {k_folds}")
        if k_folds > len(train):
            raise ConfigError(
                f"cannot make {k_folds} folds from {len(train)} training rows"
            )
        fold_perm = np.random.default_rng(seed + 1).permutation(train)
        folds = [np.sort(f) for f in np.array_split(fold_perm, k_folds)]
    return SplitPlan(train=train, test=test, folds=folds, seed=seed)


def take(ds: Dataset, idx) -> Dataset:
    return replace(ds, x=ds.x[idx], y=ds.y[idx])
