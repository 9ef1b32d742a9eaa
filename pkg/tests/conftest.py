import numpy as np
import pytest

from flowtm import MachineConfig, TsetlinMachine


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure the algorithm."""
    cfg = MachineConfig(num_classes=2, clauses_per_class=4, threshold=5,
                        specificity=3.0, epochs=2, rng_seed=0)
    machine = TsetlinMachine(cfg, 3)
    X = np.array([[0, 1, 0], [1, 0, 1]], dtype=np.uint8)
    machine.fit(X, np.array([0, 1]), epochs=2)
    machine.predict_bits(X)
    machine.clause_outputs(_lits(machine, [0, 1, 0]))
    machine.validate()


def _lits(machine, bits):
    from flowtm import with_negations

    return with_negations(np.asarray(bits, dtype=np.uint8))


@pytest.fixture
def tiny_table():
    """Small synthetic 5-class table shared by pipeline-level tests."""
    from flowtm import gen_synthetic

    return gen_synthetic([40, 16, 16, 16, 16], seed=123, separation=7.0)


@pytest.fixture
def fast_config():
    """Small machine settings that keep pipeline tests quick."""
    from flowtm.pipeline import PipelineConfig

    return PipelineConfig(clauses_per_class=100, threshold=15, specificity=5.0,
                          epochs=10, n_bins=8, seed=11)
