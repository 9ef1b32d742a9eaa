"""Request/response models for the inference service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    model_loaded: bool


class ModelInfoResponse(BaseModel):
    num_classes: int
    clauses_per_class: int
    threshold: int
    specificity: float
    state_depth: int
    sparse: bool
    max_included_literals: int | None
    num_feature_bits: int
    n_bins: int
    feature_names: list[str]
    class_names: list[str]
    model_size_kb: float


class PredictRequest(BaseModel):
    rows: list[list[float]] | None = Field(
        default=None, description="Feature rows in the model's feature order."
    )
    records: list[dict[str, float]] | None = Field(
        default=None, description="Feature rows keyed by feature name."
    )


class PredictionItem(BaseModel):
    row: int
    label: int
    class_name: str
    votes: list[int]


class PredictResponse(BaseModel):
    predictions: list[PredictionItem]


class ExplainRequest(BaseModel):
    row: list[float] | None = None
    record: dict[str, float] | None = None
    include_activations: bool = False


class ExplainResponse(BaseModel):
    predicted: int
    class_name: str
    votes: list[int]
    class_names: list[str]
    feature_contributions: dict[str, float]
    activations: list[list[int]] | None = None


class BenchRequest(BaseModel):
    rows: list[list[float]] | None = None
    records: list[dict[str, float]] | None = None
    iters: int = 100
    warmup: int = 10
    include_binarization: bool = False


class BenchResponse(BaseModel):
    inference_time_us_mean: float
    inference_time_us_std: float
    samples_measured: int
    warmup: int
    memory_kb: float
    cpu_percent: float | None
    model_size_kb: float
    includes_binarization: bool


class ErrorResponse(BaseModel):
    error: str
    message: str
