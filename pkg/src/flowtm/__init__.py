"""flowtm: interpretable Tsetlin Machine IDS for network flow records."""

from .binarize import FlowBinarizer, QuantileBinner, Standardizer
from .dataset import (
    BalanceReport,
    CleanReport,
    FlowTable,
    SplitSpec,
    clean,
    gen_synthetic,
    load_csv,
    smote_balance,
    split,
)
from .errors import (
    ConfigError,
    DataError,
    FlowTMError,
    ModelFormatError,
    SchemaError,
    StructuralError,
)
from .evaluate import BenchReport, CVReport, MetricsReport, bench, confusion, kfold, metrics
from .interpret import Explanation, contribution_vector, explain, export_explanation, render_rules
from .modelio import ModelBundle, load_model, save_model
from .pipeline import PipelineConfig, train_pipeline
from .tm import (
    Clause,
    ClassScores,
    LiteralVector,
    MachineConfig,
    TrainReport,
    TsetlinMachine,
    eval_clause,
    with_negations,
)

__version__ = "0.1.0"

__all__ = [
    "FlowBinarizer", "QuantileBinner", "Standardizer",
    "BalanceReport", "CleanReport", "FlowTable", "SplitSpec",
    "clean", "gen_synthetic", "load_csv", "smote_balance", "split",
    "ConfigError", "DataError", "FlowTMError", "ModelFormatError",
    "SchemaError", "StructuralError",
    "BenchReport", "CVReport", "MetricsReport", "bench", "confusion", "kfold", "metrics",
    "Explanation", "contribution_vector", "explain", "export_explanation", "render_rules",
    "ModelBundle", "load_model", "save_model",
    "PipelineConfig", "train_pipeline",
    "Clause", "ClassScores", "LiteralVector", "MachineConfig", "TrainReport",
    "TsetlinMachine", "eval_clause", "with_negations",
    "__version__",
]
