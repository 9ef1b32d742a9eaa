"""Metrics, cross-validation, and the inference/latency benchmark harness."""

from __future__ import annotations

import resource
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .tm import TsetlinMachine

__all__ = ["confusion", "ClassMetrics", "MetricsReport", "metrics",
           "CVReport", "kfold", "BenchReport", "bench"]


def confusion(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Count matrix[c_true][c_pred]; rows sum to class supports."""
    yt = np.asarray(y_true, dtype=np.int64)
    yp = np.asarray(y_pred, dtype=np.int64)
    if yt.shape != yp.shape or yt.ndim != 1:
        raise DataError("label sequences must be one-dimensional and equal length")
    if yt.size and (yt.min() < 0 or yt.max() >= num_classes
                    or yp.min() < 0 or yp.max() >= num_classes):
        raise DataError("label out of range for the class count")
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (yt, yp), 1)
    return matrix


@dataclass
class ClassMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    """One-vs-rest counts plus precision/recall/F1 at class, macro, weighted level."""

    per_class: list[ClassMetrics]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    total: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f1": self.macro_f1},
            "weighted": {"precision": self.weighted_precision,
                         "recall": self.weighted_recall, "f1": self.weighted_f1},
            "per_class": [
                {"class": c, "tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn,
                 "precision": m.precision, "recall": m.recall, "f1": m.f1,
                 "support": m.support}
                for c, m in enumerate(self.per_class)
            ],
            "total": self.total,
        }

    def to_csv(self) -> str:
        lines = ["class,tp,fp,fn,tn,precision,recall,f1,support"]
        for c, m in enumerate(self.per_class):
            lines.append(f"{c},{m.tp},{m.fp},{m.fn},{m.tn},"
                         f"{m.precision:.6f},{m.recall:.6f},{m.f1:.6f},{m.support}")
        lines.append(f"macro,,,,,{self.macro_precision:.6f},{self.macro_recall:.6f},"
                     f"{self.macro_f1:.6f},{self.total}")
        lines.append(f"weighted,,,,,{self.weighted_precision:.6f},"
                     f"{self.weighted_recall:.6f},{self.weighted_f1:.6f},{self.total}")
        return "\n".join(lines) + "\n"


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0  # 0/0 convention: metric is 0


def metrics(matrix: np.ndarray) -> MetricsReport:
    """Per-class and aggregate precision/recall/F1 from a confusion matrix."""
    m = np.asarray(matrix, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError("confusion matrix must be square")
    if (m < 0).any():
        raise DataError("confusion matrix must be non-negative")
    total = int(m.sum())
    diag = np.diag(m)
    per_class = []
    for c in range(m.shape[0]):
        tp = int(diag[c])
        fp = int(m[:, c].sum() - tp)
        fn = int(m[c, :].sum() - tp)
        tn = total - tp - fp - fn
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_class.append(ClassMetrics(tp, fp, fn, tn, precision, recall, f1, tp + fn))

    supports = np.array([cm.support for cm in per_class], dtype=np.float64)
    weights = supports / total if total else np.zeros_like(supports)
    precisions = np.array([cm.precision for cm in per_class])
    recalls = np.array([cm.recall for cm in per_class])
    f1s = np.array([cm.f1 for cm in per_class])
    return MetricsReport(
        per_class=per_class,
        accuracy=_safe_div(float(diag.sum()), total),
        macro_precision=float(precisions.mean()),
        macro_recall=float(recalls.mean()),
        macro_f1=float(f1s.mean()),
        weighted_precision=float(precisions @ weights),
        weighted_recall=float(recalls @ weights),
        weighted_f1=float(f1s @ weights),
        total=total,
    )


@dataclass
class CVReport:
    """Per-fold metrics with mean and std aggregation."""

    k: int
    fold_reports: list[MetricsReport]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def aggregate(self) -> None:
        keys = {
            "accuracy": lambda r: r.accuracy,
            "macro_precision": lambda r: r.macro_precision,
            "macro_recall": lambda r: r.macro_recall,
            "macro_f1": lambda r: r.macro_f1,
            "weighted_precision": lambda r: r.weighted_precision,
            "weighted_recall": lambda r: r.weighted_recall,
            "weighted_f1": lambda r: r.weighted_f1,
        }
        for key, getter in keys.items():
            values = np.array([getter(r) for r in self.fold_reports])
            self.mean[key] = float(values.mean())
            self.std[key] = float(values.std())

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mean": self.mean,
            "std": self.std,
            "folds": [r.to_dict() for r in self.fold_reports],
        }


def stratified_fold_indices(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Disjoint covering test folds, round-robin dealt per shuffled class."""
    if k < 2:
        raise ConfigError("k must be at least 2")
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        if rows.size < k:
            raise DataError(f"class {int(cls)} has {rows.size} rows, fewer than k={k}")
        rows = rng.permutation(rows)
        for i, row in enumerate(rows):
            folds[i % k].append(int(row))
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def kfold(table, k, config, seed: int = 0) -> CVReport:
    """Stratified k-fold over the full pipeline, refit inside every fold.

    Standardizer, balancing, and binarizer parameters are learned from each
    training fold only, so no test information leaks into preprocessing.
    """
    from . import pipeline  # local import; pipeline pulls in the heavy modules

    folds = stratified_fold_indices(table.labels(), k, seed)
    all_rows = np.arange(len(table))
    reports = []
    for test_rows in folds:
        train_rows = np.setdiff1d(all_rows, test_rows)
        y_true, y_pred = pipeline.run_fold(
            table.take(train_rows), table.take(test_rows), config
        )
        reports.append(metrics(confusion(y_true, y_pred, table.num_classes)))
    cv = CVReport(k=k, fold_reports=reports)
    cv.aggregate()
    return cv


@dataclass
class BenchReport:
    """Per-sample inference timing plus resource footprint (Table-style schema)."""

    mean_us: float
    std_us: float
    samples_measured: int
    warmup: int
    memory_kb: float
    model_size_kb: float
    cpu_percent: float | None = None
    includes_binarization: bool = False

    def to_dict(self) -> dict:
        return {
            "inference_time_us_mean": self.mean_us,
            "inference_time_us_std": self.std_us,
            "samples_measured": self.samples_measured,
            "warmup": self.warmup,
            "memory_kb": self.memory_kb,
            "cpu_percent": self.cpu_percent,
            "model_size_kb": self.model_size_kb,
            "includes_binarization": self.includes_binarization,
        }

    def to_csv(self) -> str:
        head = ("inference_time_us_mean,inference_time_us_std,samples_measured,"
                "warmup,memory_kb,cpu_percent,model_size_kb,includes_binarization")
        cpu = "" if self.cpu_percent is None else f"{self.cpu_percent:.2f}"
        row = (f"{self.mean_us:.3f},{self.std_us:.3f},{self.samples_measured},"
               f"{self.warmup},{self.memory_kb:.1f},{cpu},{self.model_size_kb:.2f},"
               f"{int(self.includes_binarization)}")
        return head + "\n" + row + "\n"


def bench(model: TsetlinMachine, samples: np.ndarray, warmup: int = 10,
          iters: int = 100, binarizer=None, raw_rows: np.ndarray | None = None,
          model_size_bytes: int | None = None) -> BenchReport:
    """Wall-clock single-sample inference timing after warmup discards.

    By default only the model kernel is timed over pre-binarized feature
    bits; pass a binarizer together with raw rows to time the full
    transform-plus-predict path. Single-threaded by construction.
    """
    if iters < 1:
        raise ConfigError("iters must be at least 1")
    include_binarization = binarizer is not None and raw_rows is not None

    if include_binarization:
        rows = np.asarray(raw_rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise DataError("raw rows must be a non-empty matrix")
        count = rows.shape[0]

        def run_one(i):
            bits = binarizer.transform(rows[i % count][np.newaxis, :])
            return model.predict_bits(bits)
    else:
        bits = np.atleast_2d(np.asarray(samples, dtype=np.uint8))
        if bits.shape[0] == 0:
            raise DataError("need at least one sample to benchmark")
        packed = model.pack_features(bits)
        count = packed.shape[0]
        from . import _kernels

        def run_one(i):
            return _kernels.predict_one(
                model.include_mask, model.include_count, packed[i % count],
                model.half, model.config.threshold,
            )

    try:
        import psutil
        proc = psutil.Process()
        proc.cpu_percent(interval=None)  # prime the counter
    except Exception:
        proc = None

    for i in range(warmup):
        run_one(i)
    times_ns = np.empty(iters, dtype=np.float64)
    for i in range(iters):
        start = time.perf_counter_ns()
        run_one(i)
        times_ns[i] = time.perf_counter_ns() - start

    cpu = None
    if proc is not None:
        try:
            cpu = float(proc.cpu_percent(interval=None))
        except Exception:
            cpu = None

    if model_size_bytes is None:
        from .modelio import serialize_model
        model_size_bytes = len(serialize_model(model, binarizer))

    peak_kb = float(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)
    return BenchReport(
        mean_us=float(times_ns.mean() / 1000.0),
        std_us=float(times_ns.std() / 1000.0),
        samples_measured=iters,
        warmup=warmup,
        memory_kb=peak_kb,
        model_size_kb=model_size_bytes / 1024.0,
        cpu_percent=cpu,
        includes_binarization=include_binarization,
    )
