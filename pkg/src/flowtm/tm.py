"""Multi-class Tsetlin Machine over bit-packed literal vectors.

A sample with n binary features becomes 2n literals (the features followed
by their negations). Each class owns an even number of conjunctive clauses,
the first half voting +1 and the second half -1. Clause membership is
decided by one learning automaton per literal with states 1..2N: states
above N mean the literal is included. The clamped sum of clause votes is
the class score; prediction is the argmax with ties broken toward the
lowest class index.

Sparse mode caps the number of included literals per clause; include
transitions that would exceed the cap are suppressed during training.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError, StructuralError

__all__ = [
    "LiteralVector",
    "Clause",
    "MachineConfig",
    "ClassScores",
    "TrainReport",
    "with_negations",
    "eval_clause",
    "pack_literal_rows",
    "TsetlinMachine",
]


def _binomial_cdf(n: int, p: float) -> np.ndarray:
    """CDF of Binomial(n, p) for the feedback event-count sampler."""
    k = np.arange(n + 1, dtype=np.float64)
    lg = np.vectorize(math.lgamma)
    log_coeff = lg(n + 1.0) - lg(k + 1.0) - lg(n - k + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.where(k == 0, 0.0, k * np.log(p))
        log_q = np.where(k == n, 0.0, (n - k) * np.log1p(-p))
    cdf = np.cumsum(np.exp(log_coeff + log_p + log_q))
    cdf = np.minimum(cdf, 1.0)
    cdf[-1] = 1.0
    return cdf


def _as_binary_array(values, name="sample_bits"):
    arr = np.asarray(values)
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.number):
        raise DataError(f"{name} must be numeric 0/1 values")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise DataError(f"{name} must contain only 0 or 1")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class LiteralVector:
    """A binarized sample: n feature bits followed by their n negations."""

    bits: np.ndarray
    n: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        object.__setattr__(self, "bits", bits)
        if bits.ndim != 1 or bits.shape[0] != 2 * self.n:
            raise DataError(f"literal vector must have length {2 * self.n}, got {bits.shape}")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise DataError("literal vector bits must be 0 or 1")
        if not np.array_equal(bits[self.n:], 1 - bits[: self.n]):
            raise DataError("negation half does not mirror the feature bits")

    def packed(self) -> np.ndarray:
        return pack_literal_rows(self.bits[np.newaxis, :])[0]


def with_negations(sample_bits) -> LiteralVector:
    """Build the 2n literal vector for n feature bits."""
    bits = _as_binary_array(sample_bits)
    if bits.ndim != 1:
        raise DataError("sample_bits must be one-dimensional")
    return LiteralVector(np.concatenate([bits, 1 - bits]), n=bits.shape[0])


def negate_rows(feature_bits: np.ndarray) -> np.ndarray:
    """Append negations to a (N, n) feature-bit matrix, giving (N, 2n)."""
    bits = _as_binary_array(feature_bits, "feature bits")
    if bits.ndim != 2:
        raise DataError("feature bit matrix must be two-dimensional")
    return np.concatenate([bits, 1 - bits], axis=1)


def pack_literal_rows(literal_bits: np.ndarray) -> np.ndarray:
    """Pack (N, L) literal bits into (N, ceil(L/64)) little-endian words."""
    bits = np.asarray(literal_bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise DataError("literal bit matrix must be two-dimensional")
    n_rows, width = bits.shape
    n_words = max(1, (width + 63) // 64)
    padded = np.zeros((n_rows, n_words * 64), dtype=np.uint8)
    padded[:, :width] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed.view("<u8"))


@dataclass(frozen=True)
class Clause:
    """A conjunction over literal indices with a vote sign for its class."""

    included: tuple[int, ...]
    polarity: int
    class_id: int = 0

    def __post_init__(self):
        if self.polarity not in (1, -1):
            raise StructuralError("clause polarity must be +1 or -1")
        object.__setattr__(self, "included", tuple(sorted(set(int(k) for k in self.included))))


def eval_clause(clause: Clause, lits, mode: str = "infer"):
    """Evaluate a clause on one literal vector or a (N, 2n) literal matrix.

    Returns 1 iff every included literal is on. An empty clause yields 1 in
    train mode and 0 in infer mode. Indices past the literal width raise a
    structural error.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"unknown evaluation mode {mode!r}")
    if isinstance(lits, LiteralVector):
        bits = lits.bits[np.newaxis, :]
        single = True
    else:
        bits = np.asarray(lits, dtype=np.uint8)
        single = bits.ndim == 1
        bits = np.atleast_2d(bits)
    width = bits.shape[1]
    if clause.included and max(clause.included) >= width:
        raise StructuralError(
            f"clause literal index {max(clause.included)} out of range for width {width}"
        )
    if not clause.included:
        out = np.full(bits.shape[0], 1 if mode == "train" else 0, dtype=np.uint8)
    else:
        packed = pack_literal_rows(bits)
        mask = np.zeros(packed.shape[1], dtype=np.uint64)
        for k in clause.included:
            mask[k >> 6] |= np.uint64(1) << np.uint64(k & 63)
        out = ((packed & mask) == mask).all(axis=1).astype(np.uint8)
    return int(out[0]) if single else out


@dataclass
class MachineConfig:
    """Hyperparameters of the machine.

    threshold is the vote clamp T, specificity the feedback parameter s,
    state_depth the per-automaton half-depth N (states run 1..2N).
    """

    num_classes: int
    clauses_per_class: int = 2000
    threshold: int = 30
    specificity: float = 15.0
    state_depth: int = 128
    sparse: bool = False
    max_included_literals: int | None = None
    epochs: int = 45
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.num_classes < 1:
            raise ConfigError("num_classes must be at least 1")
        if self.clauses_per_class < 2 or self.clauses_per_class % 2 != 0:
            raise ConfigError("clauses_per_class must be an even number >= 2")
        if self.threshold < 1:
            raise ConfigError("threshold must be a positive integer")
        if not self.specificity > 1.0:
            raise ConfigError("specificity must be greater than 1")
        if self.state_depth < 1 or self.state_depth > 16000:
            raise ConfigError("state_depth must be in [1, 16000]")
        if self.sparse:
            if self.max_included_literals is None or self.max_included_literals < 1:
                raise ConfigError("sparse mode requires max_included_literals >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")


@dataclass(frozen=True)
class ClassScores:
    """Clamped per-class vote sums plus the tie-broken argmax."""

    scores: np.ndarray
    predicted: int


@dataclass
class TrainReport:
    """Per-epoch accuracy trace of one fit() call."""

    epochs: int
    train_accuracy: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "seconds": self.seconds,
        }


class TsetlinMachine:
    """Per-class clause banks plus automaton states; standard and sparse modes."""

    def __init__(self, config: MachineConfig, num_feature_bits: int):
        config.validate()
        if num_feature_bits < 1:
            raise ConfigError("num_feature_bits must be at least 1")
        if config.sparse and config.max_included_literals is None:
            raise ConfigError("sparse mode requires max_included_literals")
        self.config = config
        self.n = num_feature_bits
        self.num_literals = 2 * num_feature_bits
        self.num_words = (self.num_literals + 63) // 64
        shape = (config.num_classes, config.clauses_per_class, self.num_literals)
        # All automata start at N (exclude, at the include boundary).
        self.ta_state = np.full(shape, config.state_depth, dtype=np.int16)
        self.include_mask = np.zeros(
            (config.num_classes, config.clauses_per_class, self.num_words), dtype=np.uint64
        )
        self.include_count = np.zeros(
            (config.num_classes, config.clauses_per_class), dtype=np.int32
        )
        self.rng_state = _kernels.seed_rng_state(np.uint64(config.rng_seed & (2**64 - 1)))
        self._outputs_buf = np.zeros(config.clauses_per_class, dtype=np.uint8)
        # Event-count sampler for the per-literal Bernoulli(1/s) feedback.
        self._event_cdf = _binomial_cdf(self.num_literals, 1.0 / config.specificity)
        self._event_scratch = np.zeros(self.num_words, dtype=np.uint64)
        self._event_positions = np.zeros(self.num_literals, dtype=np.int64)
        self._ctz_table = _kernels._DEBRUIJN_TABLE

    # -- basic geometry -------------------------------------------------

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    @property
    def clauses_per_class(self) -> int:
        return self.config.clauses_per_class

    @property
    def half(self) -> int:
        return self.config.clauses_per_class // 2

    @property
    def literal_cap(self) -> int:
        """Include cap passed to the kernels; 0 disables the cap."""
        if self.config.sparse and self.config.max_included_literals:
            return int(self.config.max_included_literals)
        return 0

    def clause_polarity(self, clause_idx: int) -> int:
        return 1 if clause_idx < self.half else -1

    def _check_lits(self, lits) -> np.ndarray:
        if isinstance(lits, LiteralVector):
            if lits.n != self.n:
                raise StructuralError(
                    f"literal vector has {lits.n} feature bits, model expects {self.n}"
                )
            return lits.packed()
        arr = np.asarray(lits)
        if arr.dtype == np.uint64 and arr.shape == (self.num_words,):
            return arr
        raise StructuralError("expected a LiteralVector matching the model width")

    # -- inference ------------------------------------------------------

    def clause_outputs(self, lits, mode: str = "infer") -> np.ndarray:
        """Binary clause-output matrix (num_classes, clauses_per_class)."""
        packed = self._check_lits(lits)
        train = mode == "train"
        out = np.zeros((self.num_classes, self.clauses_per_class), dtype=np.uint8)
        for c in range(self.num_classes):
            _kernels.bank_clause_outputs(
                self.include_mask[c], self.include_count[c], packed, train, out[c]
            )
        return out

    def class_sums(self, lits, mode: str = "infer", clamp: bool = True) -> np.ndarray:
        packed = self._check_lits(lits)
        out = np.zeros(self.num_classes, dtype=np.int32)
        _kernels.class_sums_one(
            self.include_mask, self.include_count, packed, self.half,
            self.config.threshold, mode == "train", clamp, out,
        )
        return out

    def class_sum(self, class_id: int, lits, mode: str = "infer") -> int:
        if not 0 <= class_id < self.num_classes:
            raise StructuralError(f"class_id {class_id} out of range")
        return int(self.class_sums(lits, mode=mode)[class_id])

    def predict(self, lits) -> ClassScores:
        scores = self.class_sums(lits, mode="infer")
        return ClassScores(scores=scores, predicted=int(np.argmax(scores)))

    def predict_packed(self, packed_rows: np.ndarray, return_scores: bool = False):
        """Predict a packed (N, W) literal matrix; returns labels (and scores)."""
        if packed_rows.ndim != 2 or packed_rows.shape[1] != self.num_words:
            raise StructuralError("packed matrix width does not match the model")
        scores = np.zeros((packed_rows.shape[0], self.num_classes), dtype=np.int32)
        _kernels.class_sums_batch(
            self.include_mask, self.include_count, packed_rows, self.half,
            self.config.threshold, False, True, scores,
        )
        labels = np.argmax(scores, axis=1).astype(np.int64)
        return (labels, scores) if return_scores else labels

    def predict_bits(self, feature_bits: np.ndarray, return_scores: bool = False):
        """Predict a (N, n) feature-bit matrix."""
        bits = _as_binary_array(feature_bits, "feature bits")
        bits = np.atleast_2d(bits)
        if bits.shape[1] != self.n:
            raise StructuralError(
                f"feature width {bits.shape[1]} does not match model width {self.n}"
            )
        return self.predict_packed(pack_literal_rows(negate_rows(bits)), return_scores)

    def pack_features(self, feature_bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(_as_binary_array(feature_bits, "feature bits"))
        if bits.shape[1] != self.n:
            raise StructuralError(
                f"feature width {bits.shape[1]} does not match model width {self.n}"
            )
        return pack_literal_rows(negate_rows(bits))

    # -- training -------------------------------------------------------

    def fit_sample(self, lits, true_class: int) -> None:
        """One stochastic update: Type I to the true class, Type II to one other."""
        if not 0 <= true_class < self.num_classes:
            raise DataError(f"label {true_class} out of range")
        packed = self._check_lits(lits).reshape(1, -1)
        y = np.array([true_class], dtype=np.int64)
        order = np.zeros(1, dtype=np.int64)
        self._fit_packed(packed, y, order)

    def _fit_packed(self, packed: np.ndarray, y: np.ndarray, order: np.ndarray) -> None:
        _kernels.fit_samples(
            self.ta_state, self.include_mask, self.include_count, packed, y,
            order, self.half, self.config.threshold, self.config.state_depth,
            self.literal_cap, self.rng_state, self._event_cdf,
            self._event_scratch, self._event_positions, self._ctz_table,
            self._outputs_buf,
        )

    def fit(self, feature_bits: np.ndarray, labels: np.ndarray,
            epochs: int | None = None, test_bits: np.ndarray | None = None,
            test_labels: np.ndarray | None = None, shuffle: bool = True) -> TrainReport:
        """Run seeded epochs over a (N, n) feature-bit matrix.

        Each epoch reshuffles the sample order and appends train (and, when a
        test set is given, test) accuracy to the report trace.
        """
        bits = np.atleast_2d(_as_binary_array(feature_bits, "feature bits"))
        if bits.shape[0] == 0:
            raise DataError("training set is empty")
        if bits.shape[1] != self.n:
            raise StructuralError(
                f"feature width {bits.shape[1]} does not match model width {self.n}"
            )
        y = np.asarray(labels, dtype=np.int64)
        if y.shape != (bits.shape[0],):
            raise DataError("labels must align with the training rows")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError("labels out of range for the configured class count")
        epochs = int(epochs if epochs is not None else self.config.epochs)
        if epochs < 1:
            raise ConfigError("epochs must be at least 1")

        packed = pack_literal_rows(negate_rows(bits))
        packed_test = None
        y_test = None
        if test_bits is not None:
            tb = np.atleast_2d(_as_binary_array(test_bits, "feature bits"))
            packed_test = pack_literal_rows(negate_rows(tb))
            y_test = np.asarray(test_labels, dtype=np.int64)

        shuffler = np.random.default_rng(self.config.rng_seed)
        report = TrainReport(epochs=epochs)
        started = time.perf_counter()
        for _ in range(epochs):
            if shuffle:
                order = shuffler.permutation(bits.shape[0]).astype(np.int64)
            else:
                order = np.arange(bits.shape[0], dtype=np.int64)
            self._fit_packed(packed, y, order)
            report.train_accuracy.append(float(np.mean(self.predict_packed(packed) == y)))
            if packed_test is not None and y_test.size:
                report.test_accuracy.append(
                    float(np.mean(self.predict_packed(packed_test) == y_test))
                )
        report.seconds = time.perf_counter() - started
        return report

    # -- introspection and validation ------------------------------------

    def included_literals(self, class_id: int, clause_idx: int) -> np.ndarray:
        return np.flatnonzero(self.ta_state[class_id, clause_idx] > self.config.state_depth)

    def refresh_includes(self) -> None:
        """Recompute packed masks and counts after direct state edits."""
        _kernels.rebuild_include_masks(
            self.ta_state, self.config.state_depth, self.include_mask, self.include_count
        )

    def set_included_literals(self, class_id: int, clause_idx: int, literals,
                              refresh: bool = True) -> None:
        """Install a clause by hand: included literals saturate, the rest reset."""
        if not 0 <= class_id < self.num_classes:
            raise StructuralError(f"class_id {class_id} out of range")
        if not 0 <= clause_idx < self.clauses_per_class:
            raise StructuralError(f"clause index {clause_idx} out of range")
        row = self.ta_state[class_id, clause_idx]
        row[:] = 1
        for k in literals:
            k = int(k)
            if not 0 <= k < self.num_literals:
                raise StructuralError(f"literal index {k} out of range")
            row[k] = 2 * self.config.state_depth
        if refresh:
            self.refresh_includes()

    def clauses(self, class_id: int) -> list[Clause]:
        if not 0 <= class_id < self.num_classes:
            raise StructuralError(f"class_id {class_id} out of range")
        return [
            Clause(
                included=tuple(self.included_literals(class_id, j).tolist()),
                polarity=self.clause_polarity(j),
                class_id=class_id,
            )
            for j in range(self.clauses_per_class)
        ]

    def validate(self) -> None:
        """Check state bounds and state/mask consistency; raises on violation."""
        depth = self.config.state_depth
        if self.ta_state.min(initial=1) < 1 or self.ta_state.max(initial=1) > 2 * depth:
            raise StructuralError("automaton state outside [1, 2N]")
        masks = np.zeros_like(self.include_mask)
        counts = np.zeros_like(self.include_count)
        _kernels.rebuild_include_masks(self.ta_state, depth, masks, counts)
        if not np.array_equal(masks, self.include_mask):
            raise StructuralError("include masks inconsistent with automaton states")
        if not np.array_equal(counts, self.include_count):
            raise StructuralError("include counts inconsistent with automaton states")

    def validate_literal_budget(self, cap: int | None = None) -> "TsetlinMachine":
        """Post-hoc validator of the sparse include cap; returns the model."""
        cap = cap if cap is not None else self.config.max_included_literals
        if cap is None or cap < 1:
            raise ConfigError("literal cap must be at least 1")
        self.validate()
        worst = int(self.include_count.max(initial=0))
        if worst > cap:
            raise StructuralError(
                f"clause exceeds literal cap: {worst} included, cap {cap}"
            )
        return self

    def copy(self) -> "TsetlinMachine":
        clone = TsetlinMachine(replace(self.config), self.n)
        clone.ta_state = self.ta_state.copy()
        clone.include_mask = self.include_mask.copy()
        clone.include_count = self.include_count.copy()
        clone.rng_state = self.rng_state.copy()
        return clone
