"""FastAPI service wrapping a loaded model for multi-client inference.

The model bundle is loaded once at startup and never mutated, so request
handlers can share it freely. Training stays offline in the CLI; this
service covers the deployment loop: classify flow rows, explain decisions,
and benchmark the inference path.
"""

from __future__ import annotations

import os

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import evaluate, interpret
from ..errors import DataError, FlowTMError, SchemaError
from ..modelio import ModelBundle, load_model, serialize_model
from ..tm import with_negations
from .schemas import (
    BenchRequest,
    BenchResponse,
    ExplainRequest,
    ExplainResponse,
    HealthResponse,
    ModelInfoResponse,
    PredictionItem,
    PredictResponse,
    PredictRequest,
)

MODEL_PATH_ENV = "FLOWTM_MODEL"


def _rows_from_request(rows, records, feature_names) -> np.ndarray:
    if rows is None and records is None:
        raise DataError("request must carry 'rows' or 'records'")
    if rows is not None and records is not None:
        raise DataError("pass either 'rows' or 'records', not both")
    if records is not None:
        out = np.empty((len(records), len(feature_names)), dtype=np.float64)
        for i, record in enumerate(records):
            missing = [n for n in feature_names if n not in record]
            if missing:
                raise SchemaError(f"record {i} is missing features: {missing[:5]}")
            out[i] = [record[n] for n in feature_names]
    else:
        if len(rows) == 0:
            return np.zeros((0, len(feature_names)), dtype=np.float64)
        out = np.asarray(rows, dtype=np.float64)
        if out.ndim == 1:
            out = out[np.newaxis, :]
        if out.size and out.shape[1] != len(feature_names):
            raise SchemaError(
                f"rows have {out.shape[1]} features, model expects {len(feature_names)}"
            )
    if out.size and not np.isfinite(out).all():
        raise DataError("rows contain non-finite values")
    return out


def create_app(model_path: str | None = None, bundle: ModelBundle | None = None) -> FastAPI:
    """Build the service; the model comes from `bundle`, `model_path`, or $FLOWTM_MODEL."""
    app = FastAPI(title="flowtm", description="Tsetlin Machine flow classifier service")

    if bundle is None:
        path = model_path or os.environ.get(MODEL_PATH_ENV)
        if path:
            bundle = load_model(path)
    if bundle is not None and bundle.binarizer is None:
        raise SchemaError("service needs a model file with an embedded binarizer")
    app.state.bundle = bundle
    app.state.model_size_kb = (
        len(serialize_model(bundle.model, bundle.binarizer, bundle.class_names)) / 1024.0
        if bundle is not None else 0.0
    )

    @app.exception_handler(FlowTMError)
    async def _flowtm_error(_: Request, exc: FlowTMError):
        status = 400 if exc.exit_code in (2, 3) else 422
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__, "message": str(exc)})

    def _bundle() -> ModelBundle:
        if app.state.bundle is None:
            raise DataError("no model loaded")
        return app.state.bundle

    def _class_names(b: ModelBundle) -> list[str]:
        return b.class_names or [f"class_{c}" for c in range(b.model.num_classes)]

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", model_loaded=app.state.bundle is not None)

    @app.get("/model", response_model=ModelInfoResponse)
    def model_info():
        b = _bundle()
        cfg = b.model.config
        return ModelInfoResponse(
            num_classes=cfg.num_classes,
            clauses_per_class=cfg.clauses_per_class,
            threshold=cfg.threshold,
            specificity=cfg.specificity,
            state_depth=cfg.state_depth,
            sparse=cfg.sparse,
            max_included_literals=cfg.max_included_literals,
            num_feature_bits=b.model.n,
            n_bins=b.binarizer.n_bins,
            feature_names=b.binarizer.feature_names,
            class_names=_class_names(b),
            model_size_kb=app.state.model_size_kb,
        )

    @app.post("/predict", response_model=PredictResponse)
    def predict(request: PredictRequest):
        b = _bundle()
        rows = _rows_from_request(request.rows, request.records, b.binarizer.feature_names)
        names = _class_names(b)
        if rows.shape[0] == 0:
            return PredictResponse(predictions=[])
        labels, scores = b.predict_rows(rows, return_scores=True)
        return PredictResponse(predictions=[
            PredictionItem(row=i, label=int(label), class_name=names[int(label)],
                           votes=[int(v) for v in votes])
            for i, (label, votes) in enumerate(zip(labels, scores))
        ])

    @app.post("/explain", response_model=ExplainResponse)
    def explain(request: ExplainRequest):
        b = _bundle()
        rows = _rows_from_request(
            [request.row] if request.row is not None else None,
            [request.record] if request.record is not None else None,
            b.binarizer.feature_names,
        )
        if rows.shape[0] != 1:
            raise DataError("explain takes exactly one row")
        bits = b.binarizer.transform(rows)[0]
        expl = interpret.explain(b.model, with_negations(bits), b.binarizer)
        names = _class_names(b)
        return ExplainResponse(
            predicted=expl.predicted,
            class_name=names[expl.predicted],
            votes=[int(v) for v in expl.class_votes],
            class_names=names,
            feature_contributions={
                name: float(v)
                for name, v in zip(b.binarizer.feature_names, expl.feature_contributions)
            },
            activations=expl.clause_activations.astype(int).tolist()
            if request.include_activations else None,
        )

    @app.post("/bench", response_model=BenchResponse)
    def bench(request: BenchRequest):
        b = _bundle()
        rows = _rows_from_request(request.rows, request.records, b.binarizer.feature_names)
        if rows.shape[0] == 0:
            raise DataError("bench needs at least one row")
        size = int(app.state.model_size_kb * 1024.0)
        if request.include_binarization:
            report = evaluate.bench(b.model, None, warmup=request.warmup,
                                    iters=request.iters, binarizer=b.binarizer,
                                    raw_rows=rows, model_size_bytes=size)
        else:
            bits = b.binarizer.transform(rows)
            report = evaluate.bench(b.model, bits, warmup=request.warmup,
                                    iters=request.iters, model_size_bytes=size)
        return BenchResponse(**report.to_dict())

    return app
