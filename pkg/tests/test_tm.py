"""Core machine tests: literals, clause evaluation, voting, feedback, sparsity."""

import numpy as np
import pytest

from flowtm import (
    Clause,
    ConfigError,
    DataError,
    MachineConfig,
    StructuralError,
    TsetlinMachine,
    eval_clause,
    with_negations,
)
from flowtm.modelio import serialize_model
from flowtm.tm import negate_rows, pack_literal_rows


def make_machine(num_classes=2, clauses=4, threshold=10, s=3.9, n_bits=4,
                 depth=128, seed=0, sparse=False, cap=None, epochs=5):
    cfg = MachineConfig(num_classes=num_classes, clauses_per_class=clauses,
                        threshold=threshold, specificity=s, state_depth=depth,
                        sparse=sparse, max_included_literals=cap, epochs=epochs,
                        rng_seed=seed)
    return TsetlinMachine(cfg, n_bits)


class TestLiteralVector:
    def test_basic_negation(self):
        lv = with_negations([1, 0])
        assert lv.bits.tolist() == [1, 0, 0, 1]
        assert lv.n == 2

    def test_all_zero(self):
        lv = with_negations([0, 0, 0])
        assert lv.bits.tolist() == [0, 0, 0, 1, 1, 1]

    def test_negation_consistency_exhaustive_8bit(self):
        # every 8-bit input: bits[k] xor bits[8+k] == 1 for all k
        for value in range(256):
            bits = [(value >> k) & 1 for k in range(8)]
            lv = with_negations(bits)
            for k in range(8):
                assert lv.bits[k] ^ lv.bits[8 + k] == 1

    def test_rejects_non_binary(self):
        with pytest.raises(DataError):
            with_negations([0, 2])
        with pytest.raises(DataError):
            with_negations([0.5, 1.0])

    def test_rejects_inconsistent_vector(self):
        from flowtm import LiteralVector

        with pytest.raises(DataError):
            LiteralVector(np.array([1, 0, 1, 1], dtype=np.uint8), n=2)

    def test_packing_layout(self):
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, size=(5, 130)).astype(np.uint8)
        packed = pack_literal_rows(bits)
        assert packed.shape == (5, 3)
        for row in range(5):
            for k in range(130):
                assert (packed[row, k >> 6] >> np.uint64(k & 63)) & np.uint64(1) == bits[row, k]


class TestEvalClause:
    def test_satisfied(self):
        clause = Clause(included=(0, 3), polarity=1)  # x0 and not-x1 over n=2
        assert eval_clause(clause, with_negations([1, 0])) == 1

    def test_violated(self):
        clause = Clause(included=(0, 3), polarity=1)
        assert eval_clause(clause, with_negations([1, 1])) == 0

    def test_contradiction_never_fires(self):
        clause = Clause(included=(0, 2), polarity=1)  # x0 and not-x0
        for bits in ([0, 0], [0, 1], [1, 0], [1, 1]):
            assert eval_clause(clause, with_negations(bits)) == 0

    def test_empty_clause_convention(self):
        clause = Clause(included=(), polarity=1)
        lv = with_negations([1, 0])
        assert eval_clause(clause, lv, mode="train") == 1
        assert eval_clause(clause, lv, mode="infer") == 0

    def test_index_out_of_range(self):
        clause = Clause(included=(9,), polarity=1)
        with pytest.raises(StructuralError):
            eval_clause(clause, with_negations([1, 0]))

    def test_agrees_with_truth_table_oracle(self):
        # random clauses over n <= 10 against a literal-loop AND oracle
        rng = np.random.default_rng(17)
        for _ in range(300):
            n = int(rng.integers(1, 11))
            size = int(rng.integers(0, min(2 * n, 6) + 1))
            included = tuple(rng.choice(2 * n, size=size, replace=False).tolist())
            clause = Clause(included=included, polarity=1)
            inputs = np.array([[(v >> k) & 1 for k in range(n)] for v in range(2 ** n)],
                              dtype=np.uint8)
            lits = negate_rows(inputs)
            got = eval_clause(clause, lits, mode="infer")
            for i in range(2 ** n):
                expect = 0 if not included else int(all(lits[i, k] == 1 for k in included))
                assert got[i] == expect

    def test_bank_evaluator_matches_clause_evaluator(self):
        rng = np.random.default_rng(29)
        n = 10
        machine = make_machine(num_classes=1, clauses=200, n_bits=n, threshold=1000)
        clauses = []
        for j in range(200):
            size = int(rng.integers(0, 8))
            included = tuple(rng.choice(2 * n, size=size, replace=False).tolist())
            clauses.append(Clause(included=included, polarity=machine.clause_polarity(j)))
            machine.set_included_literals(0, j, included, refresh=False)
        machine.refresh_includes()
        inputs = rng.integers(0, 2, size=(100, n)).astype(np.uint8)
        lits_matrix = negate_rows(inputs)
        for i in range(100):
            lv = with_negations(inputs[i])
            bank = machine.clause_outputs(lv, mode="infer")[0]
            for j, clause in enumerate(clauses):
                assert bank[j] == eval_clause(clause, lits_matrix[i], mode="infer")


class TestClassSum:
    def test_untrained_model_scores_zero(self):
        machine = make_machine(num_classes=3, clauses=10, n_bits=4)
        lv = with_negations([1, 0, 1, 0])
        for c in range(3):
            assert machine.class_sum(c, lv, mode="infer") == 0

    def test_clamped_at_threshold(self):
        # 40 firing positive clauses, T=30 -> exactly 30
        machine = make_machine(num_classes=1, clauses=80, threshold=30, n_bits=2)
        for j in range(40):
            machine.set_included_literals(0, j, [0], refresh=False)
        machine.refresh_includes()
        lv = with_negations([1, 0])
        assert machine.class_sum(0, lv) == 30
        assert machine.class_sums(lv, clamp=False)[0] == 40

    def test_clamp_holds_for_random_models(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            machine = make_machine(num_classes=3, clauses=12, threshold=4, n_bits=6)
            machine.ta_state[:] = rng.integers(1, 257, size=machine.ta_state.shape)
            machine.refresh_includes()
            for _ in range(20):
                bits = rng.integers(0, 2, size=6).astype(np.uint8)
                for mode in ("infer", "train"):
                    sums = machine.class_sums(with_negations(bits), mode=mode)
                    assert np.all(np.abs(sums) <= 4)

    def test_out_of_range_class(self):
        machine = make_machine()
        with pytest.raises(StructuralError):
            machine.class_sum(5, with_negations([0, 0, 0, 0]))


class TestPredict:
    def test_unique_max(self):
        assert int(np.argmax(np.array([5, 3, 3, 1, 0]))) == 0

    def test_tie_breaks_to_lowest_index(self):
        machine = make_machine(num_classes=2, clauses=4, n_bits=2)
        # both classes score 0 on an untrained model: tie -> class 0
        scores = machine.predict(with_negations([1, 0]))
        assert scores.predicted == 0
        assert int(np.argmax(np.array([4, 4, 1, 0, 0]))) == 0

    def test_argmax_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            scores = rng.integers(-30, 31, size=5)
            shift = int(rng.integers(-100, 101))
            assert np.argmax(scores) == np.argmax(scores + shift)
            # arbitrary strictly increasing map: scaled arctan plus noise-free ramp
            transformed = 3.0 * np.arctan(scores / 10.0) + 0.001 * scores
            assert np.argmax(scores) == np.argmax(transformed)

    def test_literal_width_mismatch(self):
        machine = make_machine(n_bits=4)
        with pytest.raises(StructuralError):
            machine.predict(with_negations([1, 0]))


class TestFeedback:
    def test_type_ia_forces_include_from_boundary(self):
        # with s huge the 1/s event mask is empty, so a fired clause pulls in
        # every true literal: boundary states N cross to N+1. Clause selection
        # is a coin flip per sample, so iterate until the first inclusion.
        machine = make_machine(num_classes=2, clauses=2, threshold=1, s=1e17,
                               n_bits=3, seed=42)
        lv = with_negations([1, 0, 1])
        included = None
        for _ in range(50):
            machine.fit_sample(lv, 0)
            if machine.include_count[0, 0] > 0:  # clause 0 is positive polarity
                included = set(machine.included_literals(0, 0).tolist())
                states = machine.ta_state[0, 0, sorted(included)]
                break
        machine.validate()
        # true literals of [1,0,1]: x0, x2, not-x1 -> indices 0, 2, 4
        assert included == {0, 2, 4}
        assert np.all(states == 129)

    def test_saturation_at_state_ceiling(self):
        machine = make_machine(num_classes=2, clauses=2, threshold=1, s=1e17,
                               n_bits=3, seed=1, depth=4)
        lv = with_negations([1, 0, 1])
        for _ in range(100):
            machine.fit_sample(lv, 0)
        machine.validate()
        assert machine.ta_state.max() <= 8

    def test_states_and_includes_stay_consistent(self):
        rng = np.random.default_rng(3)
        machine = make_machine(num_classes=3, clauses=10, threshold=5, s=3.0,
                               n_bits=8, seed=9)
        for _ in range(300):
            bits = rng.integers(0, 2, size=8).astype(np.uint8)
            machine.fit_sample(with_negations(bits), int(rng.integers(0, 3)))
        machine.validate()

    def test_label_out_of_range(self):
        machine = make_machine()
        with pytest.raises(DataError):
            machine.fit_sample(with_negations([0, 0, 0, 0]), 7)

    def test_seeded_training_is_bit_reproducible(self):
        rng = np.random.default_rng(11)
        X = rng.integers(0, 2, size=(50, 6)).astype(np.uint8)
        y = rng.integers(0, 3, size=50).astype(np.int64)
        blobs = []
        for _ in range(2):
            machine = make_machine(num_classes=3, clauses=20, threshold=8,
                                   s=4.0, n_bits=6, seed=77)
            machine.fit(X, y, epochs=10)
            blobs.append(serialize_model(machine))
        assert blobs[0] == blobs[1]


class TestFit:
    def test_xor_is_representable(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8)
        y = np.array([0, 1, 1, 0])
        machine = make_machine(num_classes=2, clauses=20, threshold=10, s=3.9,
                               n_bits=2, seed=0, epochs=50)
        report = machine.fit(X, y)
        assert max(report.train_accuracy) == 1.0

    def test_epoch_trace_length_matches_epochs(self):
        X = np.array([[0, 1], [1, 0]], dtype=np.uint8)
        y = np.array([0, 1])
        machine = make_machine(num_classes=2, clauses=4, n_bits=2)
        report = machine.fit(X, y, epochs=7, test_bits=X, test_labels=y)
        assert report.epochs == 7
        assert len(report.train_accuracy) == 7
        assert len(report.test_accuracy) == 7

    def test_full_scale_config_is_accepted(self):
        # the standard 2000-clause, T=30, s=15, 45-epoch preset on 5 classes
        cfg = MachineConfig(num_classes=5, clauses_per_class=2000, threshold=30,
                            specificity=15.0, epochs=45)
        machine = TsetlinMachine(cfg, 20)
        rng = np.random.default_rng(0)
        X = rng.integers(0, 2, size=(10, 20)).astype(np.uint8)
        y = np.arange(10) % 5
        report = machine.fit(X, y, epochs=2)
        assert len(report.train_accuracy) == 2

    def test_empty_dataset_rejected(self):
        machine = make_machine()
        with pytest.raises(DataError):
            machine.fit(np.zeros((0, 4), dtype=np.uint8), np.zeros(0, dtype=np.int64))


class TestSparseMode:
    def test_cap_is_enforced_during_training(self):
        rng = np.random.default_rng(13)
        machine = make_machine(num_classes=2, clauses=10, threshold=5, s=3.0,
                               n_bits=12, seed=21, sparse=True, cap=4)
        X = rng.integers(0, 2, size=(60, 12)).astype(np.uint8)
        y = rng.integers(0, 2, size=60).astype(np.int64)
        machine.fit(X, y, epochs=5)
        machine.validate_literal_budget()
        assert machine.include_count.max() <= 4

    def test_cap_boundary_suppresses_seventeenth_literal(self):
        machine = make_machine(num_classes=2, clauses=2, threshold=1, s=1e17,
                               n_bits=20, seed=3, sparse=True, cap=16)
        machine.set_included_literals(0, 0, list(range(16)))
        machine.ta_state[0, 0, list(range(16))] = 129  # just inside include
        machine.refresh_includes()
        lv = with_negations(np.ones(20, dtype=np.uint8))
        for _ in range(50):
            machine.fit_sample(lv, 0)
        machine.validate_literal_budget()
        assert machine.include_count[0, 0] == 16

    def test_cap_equal_to_literal_width_matches_standard(self):
        rng = np.random.default_rng(31)
        X = rng.integers(0, 2, size=(40, 5)).astype(np.uint8)
        y = rng.integers(0, 2, size=40).astype(np.int64)
        standard = make_machine(num_classes=2, clauses=10, threshold=5, s=3.5,
                                n_bits=5, seed=55)
        capped = make_machine(num_classes=2, clauses=10, threshold=5, s=3.5,
                              n_bits=5, seed=55, sparse=True, cap=10)
        standard.fit(X, y, epochs=8)
        capped.fit(X, y, epochs=8)
        assert np.array_equal(standard.ta_state, capped.ta_state)

    def test_empty_model_passes_any_cap(self):
        machine = make_machine(num_classes=2, clauses=4, n_bits=4)
        machine.validate_literal_budget(cap=1)

    def test_validator_raises_on_violation(self):
        machine = make_machine(num_classes=2, clauses=4, n_bits=4)
        machine.set_included_literals(0, 0, [0, 1, 2])
        with pytest.raises(StructuralError):
            machine.validate_literal_budget(cap=2)

    def test_sparse_requires_cap(self):
        with pytest.raises(ConfigError):
            MachineConfig(num_classes=2, clauses_per_class=4, sparse=True)


class TestConfigValidation:
    def test_odd_clause_count_rejected(self):
        with pytest.raises(ConfigError):
            MachineConfig(num_classes=2, clauses_per_class=3)

    def test_specificity_must_exceed_one(self):
        with pytest.raises(ConfigError):
            MachineConfig(num_classes=2, specificity=1.0)

    def test_threshold_positive(self):
        with pytest.raises(ConfigError):
            MachineConfig(num_classes=2, threshold=0)
