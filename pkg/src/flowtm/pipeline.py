"""End-to-end training pipeline: clean, split, standardize, balance, binarize, fit.

Standardizer and binner are fit on the pre-balance training split only;
synthetic minority rows are interpolated in standardized space and pushed
through the same bins. The test split never touches any fitted parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .binarize import FlowBinarizer
from .dataset import BalanceReport, CleanReport, FlowTable, SplitSpec, clean, smote_balance, split
from .errors import DataError
from .modelio import ModelBundle
from .tm import MachineConfig, TrainReport, TsetlinMachine

__all__ = ["PipelineConfig", "PreparedFold", "TrainResult", "prepare_fold",
           "train_pipeline", "run_fold"]


@dataclass
class PipelineConfig:
    """Hyperparameters for one full train run; defaults match the standard preset."""

    clauses_per_class: int = 2000
    threshold: int = 30
    specificity: float = 15.0
    state_depth: int = 128
    sparse: bool = False
    max_included_literals: int | None = None
    epochs: int = 45
    n_bins: int = 40
    train_fraction: float = 0.8
    smote_k: int = 5
    use_smote: bool = True
    seed: int = 0

    @classmethod
    def stm_preset(cls, **overrides) -> "PipelineConfig":
        """Sparse preset: 1500 clauses, s=20, 25 bins, 16-literal cap, 50 epochs."""
        base = dict(
            clauses_per_class=1500, threshold=30, specificity=20.0,
            sparse=True, max_included_literals=16, epochs=50, n_bins=25,
        )
        base.update(overrides)
        return cls(**base)

    def machine_config(self, num_classes: int) -> MachineConfig:
        return MachineConfig(
            num_classes=num_classes,
            clauses_per_class=self.clauses_per_class,
            threshold=self.threshold,
            specificity=self.specificity,
            state_depth=self.state_depth,
            sparse=self.sparse,
            max_included_literals=self.max_included_literals,
            epochs=self.epochs,
            rng_seed=self.seed,
        )

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed)


@dataclass
class PreparedFold:
    binarizer: FlowBinarizer
    train_bits: np.ndarray
    train_labels: np.ndarray
    test_bits: np.ndarray
    test_labels: np.ndarray
    balance_report: BalanceReport | None


@dataclass
class TrainResult:
    bundle: ModelBundle
    train_report: TrainReport
    y_true: np.ndarray
    y_pred: np.ndarray
    clean_report: CleanReport
    balance_report: BalanceReport | None
    train_rows: int
    test_rows: int


def prepare_fold(train: FlowTable, test: FlowTable, config: PipelineConfig) -> PreparedFold:
    """Fit preprocessing on the training fold and binarize both sides."""
    if len(train) == 0:
        raise DataError("training fold is empty")
    binarizer = FlowBinarizer.fit(
        train.features(), train.feature_columns, config.n_bins
    )
    train_std = binarizer.standardize(train.features())
    train_labels = train.labels()
    balance_report = None
    if config.use_smote:
        rng = np.random.default_rng([config.seed, 1])
        train_std, train_labels, balance_report = smote_balance(
            train_std, train_labels, k_neighbors=config.smote_k, rng=rng
        )
    train_bits = binarizer.transform_standardized(train_std)
    if len(test):
        test_bits = binarizer.transform(test.features())
        test_labels = test.labels()
    else:
        test_bits = np.zeros((0, binarizer.total_bits), dtype=np.uint8)
        test_labels = np.zeros(0, dtype=np.int64)
    return PreparedFold(binarizer, train_bits, train_labels, test_bits,
                        test_labels, balance_report)


def train_pipeline(table: FlowTable, config: PipelineConfig,
                   track_test: bool = True) -> TrainResult:
    """clean -> split -> standardize -> balance -> binarize -> fit -> evaluate."""
    cleaned, clean_report = clean(table)
    if len(cleaned) == 0:
        raise DataError("no rows left after cleaning")
    train, test = split(cleaned, SplitSpec(config.train_fraction, True, config.seed))
    fold = prepare_fold(train, test, config)

    machine = TsetlinMachine(
        config.machine_config(cleaned.num_classes), fold.binarizer.total_bits
    )
    report = machine.fit(
        fold.train_bits, fold.train_labels,
        test_bits=fold.test_bits if track_test and len(fold.test_labels) else None,
        test_labels=fold.test_labels if track_test and len(fold.test_labels) else None,
    )
    y_pred = machine.predict_bits(fold.test_bits) if len(fold.test_labels) else np.zeros(0, np.int64)
    bundle = ModelBundle(model=machine, binarizer=fold.binarizer,
                         class_names=list(cleaned.class_names))
    return TrainResult(
        bundle=bundle,
        train_report=report,
        y_true=fold.test_labels,
        y_pred=y_pred,
        clean_report=clean_report,
        balance_report=fold.balance_report,
        train_rows=len(train),
        test_rows=len(test),
    )


def run_fold(train: FlowTable, test: FlowTable, config: PipelineConfig
             ) -> tuple[np.ndarray, np.ndarray]:
    """One cross-validation fold; returns (y_true, y_pred) on the test fold."""
    fold = prepare_fold(train, test, config)
    machine = TsetlinMachine(
        config.machine_config(train.num_classes), fold.binarizer.total_bits
    )
    machine.fit(fold.train_bits, fold.train_labels)
    return fold.test_labels, machine.predict_bits(fold.test_bits)
