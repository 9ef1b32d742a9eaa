"""Standardization and dense one-hot quantile binarization of flow features.

Continuous features are shifted to zero mean / unit variance (population
std, fit on the training split only) and then cut at empirical quantiles
into right-closed intervals, one bit per interval. Each non-constant
feature always occupies n_bins bits with exactly one set; duplicate
thresholds collapse so heavily tied features use fewer effective bins, the
padding bits staying zero. Constant features are carried as a single
always-zero bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

__all__ = ["Standardizer", "QuantileBinner", "FlowBinarizer", "quantile_thresholds"]


def _check_matrix(matrix, name="matrix") -> np.ndarray:
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise DataError(f"{name} must be two-dimensional")
    if arr.size == 0:
        raise DataError(f"{name} is empty")
    return arr


@dataclass
class Standardizer:
    """Per-feature mean/std learned on the training split (population std)."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, train_matrix) -> "Standardizer":
        arr = _check_matrix(train_matrix, "training matrix")
        if not np.isfinite(arr).all():
            raise DataError("training matrix contains non-finite values")
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)  # population convention, flagged in the model header
        constant = std == 0.0
        return cls(mean=mean, std=std, constant=constant)

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def transform(self, rows) -> np.ndarray:
        arr = _check_matrix(rows, "rows")
        if arr.shape[1] != self.n_features:
            raise DataError(
                f"row width {arr.shape[1]} does not match fitted width {self.n_features}"
            )
        if not np.isfinite(arr).all():
            raise DataError("rows contain non-finite values")
        out = arr - self.mean
        safe = np.where(self.constant, 1.0, self.std)
        out /= safe
        out[:, self.constant] = 0.0
        return out

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": self.constant.astype(int).tolist(),
            "std_convention": "population",
        }


def quantile_thresholds(column: np.ndarray, n_bins: int) -> np.ndarray:
    """Empirical inverse-CDF (type 1) thresholds at k/n_bins, duplicates collapsed."""
    col = np.sort(np.asarray(column, dtype=np.float64))
    m = col.shape[0]
    cuts = []
    for k in range(1, n_bins):
        idx = -((-m * k) // n_bins) - 1  # ceil(m*k/n_bins) - 1, exact in ints
        cuts.append(col[idx])
    return np.unique(np.asarray(cuts, dtype=np.float64))


@dataclass
class QuantileBinner:
    """Per-feature ascending thresholds; transform emits dense one-hot codes."""

    n_bins: int
    thresholds: list[np.ndarray]
    constant: np.ndarray

    @classmethod
    def fit(cls, train_matrix, n_bins: int) -> "QuantileBinner":
        if n_bins < 2:
            raise ConfigError("n_bins must be at least 2")
        arr = _check_matrix(train_matrix, "training matrix")
        if not np.isfinite(arr).all():
            raise DataError("training matrix contains non-finite values")
        constant = np.array([np.all(arr[:, f] == arr[0, f]) for f in range(arr.shape[1])])
        thresholds = []
        for f in range(arr.shape[1]):
            if constant[f]:
                thresholds.append(np.empty(0, dtype=np.float64))
            else:
                thresholds.append(quantile_thresholds(arr[:, f], n_bins))
        return cls(n_bins=n_bins, thresholds=thresholds, constant=constant)

    @property
    def n_features(self) -> int:
        return len(self.thresholds)

    @property
    def widths(self) -> np.ndarray:
        """Bits occupied per feature: n_bins, or 1 for a constant feature."""
        return np.where(self.constant, 1, self.n_bins).astype(np.int64)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.widths)[:-1]]).astype(np.int64)

    @property
    def total_bits(self) -> int:
        return int(self.widths.sum())

    def effective_bins(self, feature: int) -> int:
        if self.constant[feature]:
            return 1
        return len(self.thresholds[feature]) + 1

    def bin_index(self, feature: int, values: np.ndarray) -> np.ndarray:
        """Right-closed interval index; a value equal to a threshold takes the lower bin."""
        return np.searchsorted(self.thresholds[feature], values, side="left")

    def transform(self, rows) -> np.ndarray:
        arr = _check_matrix(rows, "rows")
        if arr.shape[1] != self.n_features:
            raise DataError(
                f"row width {arr.shape[1]} does not match fitted width {self.n_features}"
            )
        if not np.isfinite(arr).all():
            raise DataError("rows contain non-finite values")
        bits = np.zeros((arr.shape[0], self.total_bits), dtype=np.uint8)
        offsets = self.offsets
        row_idx = np.arange(arr.shape[0])
        for f in range(self.n_features):
            if self.constant[f]:
                continue  # single always-zero bit
            bins = self.bin_index(f, arr[:, f])
            bits[row_idx, offsets[f] + bins] = 1
        return bits

    def to_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "thresholds": [t.tolist() for t in self.thresholds],
            "constant": self.constant.astype(int).tolist(),
            "interval_convention": "right-closed",
        }


class FlowBinarizer:
    """Standardizer plus quantile binner with the feature-name layout.

    Fit on the pre-balance training split; synthetic rows are transformed
    with the same parameters. Immutable once fitted and safe to share.
    """

    def __init__(self, feature_names: list[str], standardizer: Standardizer,
                 binner: QuantileBinner):
        if len(feature_names) != standardizer.n_features:
            raise DataError("feature names do not match the fitted width")
        if standardizer.n_features != binner.n_features:
            raise DataError("standardizer and binner widths disagree")
        self.feature_names = list(feature_names)
        self.standardizer = standardizer
        self.binner = binner
        widths = binner.widths
        offsets = binner.offsets
        self.feature_of_bit = np.repeat(np.arange(len(widths)), widths)
        self.bin_of_bit = np.concatenate([np.arange(w) for w in widths]).astype(np.int64)
        self._offsets = offsets

    @classmethod
    def fit(cls, train_matrix, feature_names: list[str], n_bins: int) -> "FlowBinarizer":
        arr = _check_matrix(train_matrix, "training matrix")
        if arr.shape[1] != len(feature_names):
            raise DataError("training matrix width does not match feature names")
        standardizer = Standardizer.fit(arr)
        binner = QuantileBinner.fit(standardizer.transform(arr), n_bins)
        return cls(feature_names, standardizer, binner)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_bins(self) -> int:
        return self.binner.n_bins

    @property
    def total_bits(self) -> int:
        return self.binner.total_bits

    def standardize(self, rows) -> np.ndarray:
        return self.standardizer.transform(rows)

    def transform(self, rows) -> np.ndarray:
        """Raw feature rows to one-hot bits (standardize, then bin)."""
        return self.binner.transform(self.standardizer.transform(rows))

    def transform_standardized(self, rows) -> np.ndarray:
        """Bits for rows already in standardized space (post-balance path)."""
        return self.binner.transform(rows)

    def describe_bit(self, bit: int) -> str:
        f = int(self.feature_of_bit[bit])
        return f"{self.feature_names[f]} IN bin {int(self.bin_of_bit[bit])}"

    def to_dict(self) -> dict:
        return {
            "feature_names": self.feature_names,
            "standardizer": self.standardizer.to_dict(),
            "binner": self.binner.to_dict(),
            "total_bits": self.total_bits,
        }
