"""Flow-record ingestion, cleaning, splitting, rebalancing, and synthesis.

The canonical schema is the 84-column CICFlowMeter export used by the
MedSec-25 capture: 83 feature fields plus a Label column. Flow ID, source
and destination IPs, and the timestamp are retained for provenance but
never fed to the model, leaving 79 numeric model features.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, SchemaError

FLOW_COLUMNS = [
    "Flow ID", "Src IP", "Src Port", "Dst IP", "Dst Port",
    "Protocol", "Timestamp", "Flow Duration", "Tot Fwd Pkts", "Tot Bwd Pkts",
    "TotLen Fwd Pkts", "TotLen Bwd Pkts", "Fwd Pkt Len Max", "Fwd Pkt Len Min", "Fwd Pkt Len Mean",
    "Fwd Pkt Len Std", "Bwd Pkt Len Max", "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std",
    "Flow Byts/s", "Flow Pkts/s", "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max",
    "Flow IAT Min", "Fwd IAT Tot", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max",
    "Fwd IAT Min", "Bwd IAT Tot", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max",
    "Bwd IAT Min", "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags",
    "Fwd Header Len", "Bwd Header Len", "Fwd Pkts/s", "Bwd Pkts/s", "Pkt Len Min",
    "Pkt Len Max", "Pkt Len Mean", "Pkt Len Std", "Pkt Len Var", "FIN Flag Cnt",
    "SYN Flag Cnt", "RST Flag Cnt", "PSH Flag Cnt", "ACK Flag Cnt", "URG Flag Cnt",
    "CWE Flag Count", "ECE Flag Cnt", "Down/Up Ratio", "Pkt Size Avg", "Fwd Seg Size Avg",
    "Bwd Seg Size Avg", "Fwd Byts/b Avg", "Fwd Pkts/b Avg", "Fwd Blk Rate Avg", "Bwd Byts/b Avg",
    "Bwd Pkts/b Avg", "Bwd Blk Rate Avg", "Subflow Fwd Pkts", "Subflow Fwd Byts", "Subflow Bwd Pkts",
    "Subflow Bwd Byts", "Init Fwd Win Byts", "Init Bwd Win Byts", "Fwd Act Data Pkts", "Fwd Seg Size Min",
    "Active Mean", "Active Std", "Active Max", "Active Min", "Idle Mean",
    "Idle Std", "Idle Max", "Idle Min", "Label",
]

IDENTIFIER_COLUMNS = ["Flow ID", "Src IP", "Dst IP", "Timestamp"]
LABEL_COLUMN = "Label"

# The 79 numeric features the model consumes (ports and Protocol included).
MODEL_FEATURE_COLUMNS = [
    c for c in FLOW_COLUMNS if c not in IDENTIFIER_COLUMNS and c != LABEL_COLUMN
]

DEFAULT_LABEL_MAP = {
    "Benign": 0,
    "Reconnaissance": 1,
    "Initial access": 2,
    "Lateral movement": 3,
    "Exfiltration": 4,
}

DEFAULT_CLASS_NAMES = [name for name, _ in sorted(DEFAULT_LABEL_MAP.items(), key=lambda kv: kv[1])]


@dataclass
class CleanReport:
    rows_before: int = 0
    missing: int = 0
    duplicates: int = 0
    rows_after: int = 0

    def to_dict(self) -> dict:
        return {
            "rows_before": self.rows_before,
            "missing": self.missing,
            "duplicates": self.duplicates,
            "rows_after": self.rows_after,
        }


@dataclass
class BalanceReport:
    pre_counts: dict[int, int]
    post_counts: dict[int, int]
    method: str = "smote"
    k_neighbors: int = 5
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pre_counts": {str(k): v for k, v in self.pre_counts.items()},
            "post_counts": {str(k): v for k, v in self.post_counts.items()},
            "method": self.method,
            "k_neighbors": self.k_neighbors,
            "notes": self.notes,
        }


@dataclass
class SplitSpec:
    train_fraction: float = 0.8
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be strictly between 0 and 1")


@dataclass
class FlowTable:
    """Parsed flow records: a typed frame plus cleaning provenance."""

    frame: pd.DataFrame
    feature_columns: list[str]
    label_column: str = LABEL_COLUMN
    class_names: list[str] = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def features(self) -> np.ndarray:
        return self.frame[self.feature_columns].to_numpy(dtype=np.float64)

    def labels(self) -> np.ndarray:
        return self.frame[self.label_column].to_numpy(dtype=np.int64)

    def class_counts(self) -> dict[int, int]:
        counts = {c: 0 for c in range(self.num_classes)}
        values, freq = np.unique(self.labels(), return_counts=True) if len(self) else ((), ())
        for v, f in zip(values, freq):
            counts[int(v)] = int(f)
        return counts

    def take(self, indices: np.ndarray) -> "FlowTable":
        return FlowTable(
            frame=self.frame.iloc[indices].reset_index(drop=True),
            feature_columns=list(self.feature_columns),
            label_column=self.label_column,
            class_names=list(self.class_names),
            provenance=dict(self.provenance),
        )

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)


def load_csv(path, feature_columns: list[str] | None = None,
             label_column: str = LABEL_COLUMN,
             label_map: dict[str, int] | None = None,
             class_names: list[str] | None = None) -> FlowTable:
    """Load a flow CSV, typing features and mapping label strings to integers.

    Rows whose feature values fail numeric parsing or whose label is not in
    the map are quarantined and counted in the table provenance, not raised.
    Missing required columns raise a schema error.
    """
    feature_columns = list(feature_columns or MODEL_FEATURE_COLUMNS)
    label_map = dict(label_map or DEFAULT_LABEL_MAP)
    if class_names is None:
        class_names = [name for name, _ in sorted(label_map.items(), key=lambda kv: kv[1])]

    frame = pd.read_csv(path, skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    missing_cols = [c for c in feature_columns + [label_column] if c not in frame.columns]
    if missing_cols:
        raise SchemaError(f"missing required columns: {missing_cols}")

    quarantined = 0
    if len(frame):
        bad = np.zeros(len(frame), dtype=bool)
        for col in feature_columns:
            series = frame[col]
            if not pd.api.types.is_numeric_dtype(series):
                coerced = pd.to_numeric(series, errors="coerce")
                bad |= (coerced.isna() & series.notna()).to_numpy()
                frame[col] = coerced

        labels = frame[label_column]
        if pd.api.types.is_numeric_dtype(labels):
            numeric = labels.astype("float64")
        else:
            mapped = labels.astype(str).str.strip().map(label_map)
            direct = pd.to_numeric(labels, errors="coerce")
            numeric = mapped.fillna(direct)
        bad |= numeric.isna().to_numpy()
        in_range = numeric.fillna(-1).to_numpy()
        bad |= (in_range < 0) | (in_range >= len(class_names)) | (in_range != np.floor(in_range))
        quarantined = int(bad.sum())
        frame = frame.loc[~bad].reset_index(drop=True)
        frame[label_column] = numeric.loc[~bad].astype(np.int64).reset_index(drop=True)
    else:
        frame[label_column] = frame[label_column].astype(np.int64)

    return FlowTable(
        frame=frame,
        feature_columns=feature_columns,
        label_column=label_column,
        class_names=list(class_names),
        provenance={"source": str(path), "quarantined_rows": quarantined},
    )


def clean(table: FlowTable) -> tuple[FlowTable, CleanReport]:
    """Drop rows with missing/non-finite model features and exact duplicates.

    Duplicates are judged on model features plus label (identifier columns
    ignored); the first occurrence is kept. Idempotent.
    """
    report = CleanReport(rows_before=len(table))
    frame = table.frame
    cols = table.feature_columns + [table.label_column]
    values = frame[table.feature_columns].to_numpy(dtype=np.float64, na_value=np.nan)
    finite = np.isfinite(values).all(axis=1)
    report.missing = int((~finite).sum())
    frame = frame.loc[finite]

    dup = frame.duplicated(subset=cols, keep="first")
    report.duplicates = int(dup.sum())
    frame = frame.loc[~dup].reset_index(drop=True)
    report.rows_after = len(frame)

    provenance = dict(table.provenance)
    provenance["clean"] = report.to_dict()
    cleaned = FlowTable(
        frame=frame,
        feature_columns=list(table.feature_columns),
        label_column=table.label_column,
        class_names=list(table.class_names),
        provenance=provenance,
    )
    return cleaned, report


def split(table: FlowTable, spec: SplitSpec) -> tuple[FlowTable, FlowTable]:
    """Seeded stratified split; every row lands in exactly one side."""
    labels = table.labels()
    if len(table) == 0:
        raise DataError("cannot split an empty table")
    rng = np.random.default_rng(spec.seed)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    if spec.stratified:
        for cls in np.unique(labels):
            rows = np.flatnonzero(labels == cls)
            if rows.size < 2:
                raise DataError(
                    f"class {int(cls)} has {rows.size} row(s); stratified split needs at least 2"
                )
            rows = rng.permutation(rows)
            k = int(round(spec.train_fraction * rows.size))
            k = min(max(k, 1), rows.size - 1)
            train_idx.append(rows[:k])
            test_idx.append(rows[k:])
    else:
        rows = rng.permutation(len(table))
        k = min(max(int(round(spec.train_fraction * rows.size)), 1), rows.size - 1)
        train_idx.append(rows[:k])
        test_idx.append(rows[k:])
    train_rows = np.sort(np.concatenate(train_idx))
    test_rows = np.sort(np.concatenate(test_idx))
    return table.take(train_rows), table.take(test_rows)


def _nearest_same_class(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest neighbors (Euclidean, self excluded) per row."""
    m = points.shape[0]
    sq = np.einsum("ij,ij->i", points, points)
    neighbors = np.empty((m, k), dtype=np.int64)
    chunk = max(1, min(m, 8_000_000 // max(m, 1)))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * points[start:stop] @ points.T
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        order = np.argsort(np.take_along_axis(d2, part, axis=1), axis=1, kind="stable")
        neighbors[start:stop] = np.take_along_axis(part, order, axis=1)
    return neighbors


def smote_balance(features: np.ndarray, labels: np.ndarray, k_neighbors: int = 5,
                  rng: np.random.Generator | None = None
                  ) -> tuple[np.ndarray, np.ndarray, BalanceReport]:
    """Equalize class counts with synthetic convex combinations (SMOTE).

    Works in a continuous (standardized) feature space: each synthetic row
    is x + u * (x_nn - x) for a uniform u in [0, 1] and x_nn one of the k
    nearest same-class neighbors. Only minority classes gain rows.
    """
    if k_neighbors < 1:
        raise ConfigError("k_neighbors must be at least 1")
    feats = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if feats.ndim != 2 or feats.shape[0] != y.shape[0]:
        raise DataError("features and labels must align")
    if feats.shape[0] == 0:
        raise DataError("cannot balance an empty training set")
    rng = rng or np.random.default_rng(0)

    classes, counts = np.unique(y, return_counts=True)
    majority = int(counts.max())
    pre = {int(c): int(n) for c, n in zip(classes, counts)}
    report = BalanceReport(pre_counts=pre, post_counts=dict(pre), k_neighbors=k_neighbors)

    new_rows = [feats]
    new_labels = [y]
    for cls, count in zip(classes, counts):
        need = majority - int(count)
        if need == 0:
            continue
        rows = np.flatnonzero(y == cls)
        points = feats[rows]
        if count == 1:
            note = f"class {int(cls)} has a single sample; duplicating it"
            warnings.warn(note)
            report.notes.append(note)
            synth = np.repeat(points, need, axis=0)
        else:
            k_eff = min(k_neighbors, int(count) - 1)
            if k_eff < k_neighbors:
                note = f"class {int(cls)}: k reduced from {k_neighbors} to {k_eff}"
                warnings.warn(note)
                report.notes.append(note)
            neighbors = _nearest_same_class(points, k_eff)
            base = rng.integers(0, count, size=need)
            pick = rng.integers(0, k_eff, size=need)
            u = rng.random(need)
            anchor = points[base]
            partner = points[neighbors[base, pick]]
            synth = anchor + u[:, None] * (partner - anchor)
        new_rows.append(synth)
        new_labels.append(np.full(need, cls, dtype=np.int64))
        report.post_counts[int(cls)] = majority

    return np.concatenate(new_rows), np.concatenate(new_labels), report


@dataclass
class ClassProfile:
    """Gaussian feature profile of one synthetic class."""

    mean: np.ndarray
    std: np.ndarray

    def validate(self, n_features: int) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != (n_features,) or std.shape != (n_features,):
            raise ConfigError("profile mean/std must match the feature width")
        if not np.isfinite(mean).all() or not np.isfinite(std).all():
            raise ConfigError("profile contains non-finite values")
        if (std <= 0).any():
            raise ConfigError("profile std must be strictly positive")


def separated_profiles(num_classes: int, n_features: int,
                       separation: float = 6.0) -> list[ClassProfile]:
    """Well-separated unit-variance Gaussian blobs (Bayes error ~ 0).

    Each class is shifted in its own block of features so the separation
    shows up in per-feature marginals, which is what a binarized model sees.
    """
    block = max(1, n_features // num_classes)
    profiles = []
    for cls in range(num_classes):
        mean = np.zeros(n_features)
        start = (cls * block) % n_features
        mean[start:start + block] = separation
        profiles.append(ClassProfile(mean=mean, std=np.ones(n_features)))
    return profiles


def gen_synthetic(n_per_class, class_profiles: list[ClassProfile] | None = None,
                  seed: int = 0, num_classes: int = 5,
                  feature_names: list[str] | None = None,
                  class_names: list[str] | None = None,
                  separation: float = 6.0) -> FlowTable:
    """Reproducible labeled table with controllable class separation.

    n_per_class is one count for every class or a per-class sequence; the
    default profiles are well-separated Gaussians over the 79 canonical
    model features.
    """
    feature_names = list(feature_names or MODEL_FEATURE_COLUMNS)
    n_features = len(feature_names)
    if class_profiles is not None:
        num_classes = len(class_profiles)
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if class_profiles is None:
        class_profiles = separated_profiles(num_classes, n_features, separation)
    for profile in class_profiles:
        profile.validate(n_features)

    if np.isscalar(n_per_class):
        counts = [int(n_per_class)] * num_classes
    else:
        counts = [int(v) for v in n_per_class]
        if len(counts) != num_classes:
            raise ConfigError("n_per_class sequence must match the class count")
    if any(c < 1 for c in counts):
        raise ConfigError("every class needs at least one row")

    rng = np.random.default_rng(seed)
    blocks = []
    labels = []
    for cls, (profile, count) in enumerate(zip(class_profiles, counts)):
        blocks.append(rng.normal(size=(count, n_features)) * profile.std + profile.mean)
        labels.append(np.full(count, cls, dtype=np.int64))
    features = np.concatenate(blocks)
    y = np.concatenate(labels)

    frame = pd.DataFrame(features, columns=feature_names)
    frame[LABEL_COLUMN] = y
    if class_names is None:
        if num_classes == len(DEFAULT_CLASS_NAMES):
            class_names = list(DEFAULT_CLASS_NAMES)
        else:
            class_names = [f"class_{c}" for c in range(num_classes)]
    return FlowTable(
        frame=frame,
        feature_columns=feature_names,
        label_column=LABEL_COLUMN,
        class_names=class_names,
        provenance={"source": "synthetic", "seed": seed, "counts": counts},
    )
