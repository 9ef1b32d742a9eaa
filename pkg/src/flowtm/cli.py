"""Operator command line: train, predict, explain, cv, bench, gen, serve.

Defaults mirror the standard training preset (2000 clauses, T=30, s=15,
40 bins, 45 epochs); --stm switches to the sparse preset. All file outputs
are written atomically. Exit codes: 0 ok, 2 config, 3 data, 4 model/schema.
predict/explain/bench accept --server to run against a flowtm service
instead of loading the model in-process.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile

import click
import numpy as np
import pandas as pd

from . import dataset as ds
from . import evaluate, interpret, pipeline
from .errors import ConfigError, DataError, FlowTMError, SchemaError
from .modelio import atomic_write_text, load_model, save_model, serialize_model

CONTEXT = {"auto_envvar_prefix": "FLOWTM", "help_option_names": ["-h", "--help"]}


def machine_options(fn):
    options = [
        click.option("--clauses", type=int, default=None, help="Clauses per class."),
        click.option("--threshold", type=int, default=None, help="Vote clamp T."),
        click.option("--specificity", type=float, default=None, help="Feedback s."),
        click.option("--bins", type=int, default=None, help="Quantile bins per feature."),
        click.option("--epochs", type=int, default=None, help="Training epochs."),
        click.option("--state-depth", type=int, default=None, help="Automaton half-depth N."),
        click.option("--max-included-literals", type=int, default=None,
                     help="Literal cap per clause (sparse mode)."),
        click.option("--stm", is_flag=True, help="Sparse preset: 1500 clauses, s=20, "
                                                 "25 bins, cap 16, 50 epochs."),
        click.option("--train-fraction", type=float, default=None),
        click.option("--smote-k", type=int, default=None, help="SMOTE neighbor count."),
        click.option("--smote/--no-smote", "use_smote", default=True,
                     help="Rebalance the training split."),
        click.option("--seed", type=int, default=0, help="Master seed."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def build_config(stm, clauses, threshold, specificity, bins, epochs, state_depth,
                 max_included_literals, train_fraction, smote_k, use_smote, seed
                 ) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.stm_preset() if stm else pipeline.PipelineConfig()
    overrides = {
        "clauses_per_class": clauses,
        "threshold": threshold,
        "specificity": specificity,
        "n_bins": bins,
        "epochs": epochs,
        "state_depth": state_depth,
        "max_included_literals": max_included_literals,
        "train_fraction": train_fraction,
        "smote_k": smote_k,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.use_smote = use_smote
    cfg.seed = seed
    if cfg.max_included_literals is not None and not stm:
        cfg.sparse = True
    return cfg


@click.group(context_settings=CONTEXT)
def cli():
    """Interpretable Tsetlin Machine IDS for network flow records."""


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Training CSV with the flow schema.")
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Output directory for model and reports.")
@machine_options
def train(data, out, **kw):
    """Train a model end to end and store it with its reports."""
    cfg = build_config(**kw)
    table = ds.load_csv(data)
    result = pipeline.train_pipeline(table, cfg)

    for epoch in range(result.train_report.epochs):
        train_acc = result.train_report.train_accuracy[epoch]
        line = f"epoch {epoch + 1}/{result.train_report.epochs} train_acc={train_acc:.4f}"
        if result.train_report.test_accuracy:
            line += f" test_acc={result.train_report.test_accuracy[epoch]:.4f}"
        click.echo(line)

    os.makedirs(out, exist_ok=True)
    model_path = os.path.join(out, "model.ftm")
    save_model(model_path, result.bundle.model, result.bundle.binarizer,
               result.bundle.class_names)

    report = evaluate.metrics(evaluate.confusion(
        result.y_true, result.y_pred, result.bundle.model.num_classes))
    atomic_write_text(os.path.join(out, "metrics.json"),
                      json.dumps(report.to_dict(), indent=2) + "\n")
    atomic_write_text(os.path.join(out, "metrics.csv"), report.to_csv())
    train_json = result.train_report.to_dict()
    train_json["clean"] = result.clean_report.to_dict()
    if result.balance_report:
        train_json["balance"] = result.balance_report.to_dict()
    train_json["train_rows"] = result.train_rows
    train_json["test_rows"] = result.test_rows
    atomic_write_text(os.path.join(out, "train_report.json"),
                      json.dumps(train_json, indent=2) + "\n")
    click.echo(f"model: {model_path}")
    click.echo(f"test weighted F1: {report.weighted_f1:.4f}")


def _load_rows(path, feature_names):
    """Read a prediction CSV and return (frame, quarantined_count)."""
    frame = pd.read_csv(path, skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in feature_names if c not in frame.columns]
    if missing:
        raise SchemaError(f"input is missing model features: {missing}")
    return frame


def _finite_rows(frame, feature_names):
    values = frame[feature_names].apply(pd.to_numeric, errors="coerce")
    arr = values.to_numpy(dtype=np.float64, na_value=np.nan)
    good = np.isfinite(arr).all(axis=1)
    return arr, good


def _require_model(model_path, server):
    if server:
        return
    if not model_path:
        raise ConfigError("--model is required unless --server is given")
    if not os.path.isfile(model_path):
        raise ConfigError(f"model file not found: {model_path}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(dir_okay=False),
              help="Model file (not needed with --server).")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--chunk-size", type=int, default=4096, show_default=True)
@click.option("--server", default=None, help="Run against a flowtm service URL.")
def predict(model_path, data, out, chunk_size, server):
    """Label flow rows; streams, so memory stays constant in the row count."""
    _require_model(model_path, server)
    if server:
        _predict_via_server(server, data, out)
        return
    bundle = load_model(model_path)
    if bundle.binarizer is None:
        raise SchemaError("model file has no embedded binarizer")
    names = bundle.class_names or [f"class_{c}" for c in range(bundle.model.num_classes)]
    feature_names = bundle.binarizer.feature_names

    quarantined = 0
    row_offset = 0
    directory = os.path.dirname(os.path.abspath(out)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["row", "predicted", "predicted_class"]
                            + [f"vote_{n}" for n in names])
            reader = pd.read_csv(data, skipinitialspace=True, chunksize=chunk_size)
            header_checked = False
            for chunk in reader:
                chunk.columns = [c.strip() for c in chunk.columns]
                if not header_checked:
                    missing = [c for c in feature_names if c not in chunk.columns]
                    if missing:
                        raise SchemaError(f"input is missing model features: {missing}")
                    header_checked = True
                arr, good = _finite_rows(chunk, feature_names)
                quarantined += int((~good).sum())
                rows = arr[good]
                indices = np.flatnonzero(good) + row_offset
                row_offset += len(chunk)
                if rows.shape[0] == 0:
                    continue
                labels, scores = bundle.predict_rows(rows, return_scores=True)
                for i, label, votes in zip(indices, labels, scores):
                    writer.writerow([int(i), int(label), names[int(label)]]
                                    + [int(v) for v in votes])
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    if quarantined:
        click.echo(f"quarantined {quarantined} rows with non-numeric or non-finite features",
                   err=True)
    click.echo(f"predictions: {out}")


def _predict_via_server(server, data, out):
    import httpx

    info = httpx.get(f"{server.rstrip('/')}/model", timeout=30.0)
    info.raise_for_status()
    feature_names = info.json()["feature_names"]
    frame = _load_rows(data, feature_names)
    arr, good = _finite_rows(frame, feature_names)
    rows = arr[good]
    resp = httpx.post(f"{server.rstrip('/')}/predict",
                      json={"rows": rows.tolist()}, timeout=120.0)
    resp.raise_for_status()
    payload = resp.json()["predictions"]
    indices = np.flatnonzero(good)
    buf = io.StringIO()
    writer = csv.writer(buf)
    class_names = info.json()["class_names"]
    writer.writerow(["row", "predicted", "predicted_class"]
                    + [f"vote_{n}" for n in class_names])
    for i, item in zip(indices, payload):
        writer.writerow([int(i), item["label"], item["class_name"]] + item["votes"])
    atomic_write_text(out, buf.getvalue())
    dropped = int((~good).sum())
    if dropped:
        click.echo(f"quarantined {dropped} rows", err=True)
    click.echo(f"predictions: {out}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(dir_okay=False),
              help="Model file (not needed with --server).")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--index", "indices", type=int, multiple=True, required=True,
              help="Row index to explain; repeatable.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--server", default=None, help="Run against a flowtm service URL.")
def explain(model_path, data, indices, out, server):
    """Write vote, clause-activation, and feature-contribution CSVs per sample."""
    _require_model(model_path, server)
    os.makedirs(out, exist_ok=True)
    if server:
        _explain_via_server(server, data, indices, out)
        return
    bundle = load_model(model_path)
    if bundle.binarizer is None:
        raise SchemaError("model file has no embedded binarizer")
    frame = _load_rows(data, bundle.binarizer.feature_names)
    names = bundle.class_names or [f"class_{c}" for c in range(bundle.model.num_classes)]
    for idx in indices:
        if not 0 <= idx < len(frame):
            raise DataError(f"row index {idx} out of range for {len(frame)} rows")
        row = frame.iloc[[idx]][bundle.binarizer.feature_names].to_numpy(dtype=np.float64)
        if not np.isfinite(row).all():
            raise DataError(f"row {idx} contains non-finite features")
        bits = bundle.binarizer.transform(row)[0]
        from .tm import with_negations
        expl = interpret.explain(bundle.model, with_negations(bits),
                                 bundle.binarizer, sample_id=idx)
        _write_explanation_files(out, idx, expl, names, bundle.binarizer.feature_names)
    click.echo(f"explanations: {out}")


def _write_explanation_files(out, idx, expl, class_names, feature_names):
    votes = io.StringIO()
    writer = csv.writer(votes)
    writer.writerow(["class", "vote"])
    for c, vote in enumerate(expl.class_votes):
        writer.writerow([class_names[c], int(vote)])
    atomic_write_text(os.path.join(out, f"sample_{idx}_votes.csv"), votes.getvalue())

    acts = io.StringIO()
    writer = csv.writer(acts)
    writer.writerow(["class", "clause", "active"])
    for c in range(expl.clause_activations.shape[0]):
        for j in range(expl.clause_activations.shape[1]):
            writer.writerow([class_names[c], j, int(expl.clause_activations[c, j])])
    atomic_write_text(os.path.join(out, f"sample_{idx}_activations.csv"), acts.getvalue())

    contribs = io.StringIO()
    writer = csv.writer(contribs)
    writer.writerow(["feature", "contribution"])
    for f, value in enumerate(expl.feature_contributions):
        writer.writerow([feature_names[f], float(value)])
    atomic_write_text(os.path.join(out, f"sample_{idx}_contributions.csv"),
                      contribs.getvalue())


def _explain_via_server(server, data, indices, out):
    import httpx

    info = httpx.get(f"{server.rstrip('/')}/model", timeout=30.0)
    info.raise_for_status()
    feature_names = info.json()["feature_names"]
    class_names = info.json()["class_names"]
    frame = _load_rows(data, feature_names)
    for idx in indices:
        if not 0 <= idx < len(frame):
            raise DataError(f"row index {idx} out of range for {len(frame)} rows")
        row = frame.iloc[idx][feature_names].astype(float).tolist()
        resp = httpx.post(f"{server.rstrip('/')}/explain",
                          json={"row": row, "include_activations": True}, timeout=60.0)
        resp.raise_for_status()
        body = resp.json()
        expl = interpret.Explanation(
            sample_id=idx,
            class_votes=np.array(body["votes"], dtype=np.int64),
            clause_activations=np.array(body["activations"], dtype=np.uint8),
            feature_contributions=np.array(
                [body["feature_contributions"][n] for n in feature_names]),
            predicted=body["predicted"],
        )
        _write_explanation_files(out, idx, expl, class_names, feature_names)
    click.echo(f"explanations: {out}")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@machine_options
def cv(data, folds, out, **kw):
    """Stratified k-fold cross-validation of the full pipeline."""
    cfg = build_config(**kw)
    table = ds.load_csv(data)
    cleaned, _ = ds.clean(table)
    report = evaluate.kfold(cleaned, folds, cfg, seed=cfg.seed)
    payload = json.dumps(report.to_dict(), indent=2)
    if out:
        atomic_write_text(out, payload + "\n")
        click.echo(f"cv report: {out}")
    for key in ("weighted_precision", "weighted_recall", "weighted_f1"):
        click.echo(f"{key}: {report.mean[key] * 100:.2f} +/- {report.std[key] * 100:.2f}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(dir_okay=False),
              help="Model file (not needed with --server).")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--iters", type=int, default=100, show_default=True)
@click.option("--warmup", type=int, default=10, show_default=True)
@click.option("--include-binarization", is_flag=True,
              help="Time the transform path together with the model.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--server", default=None, help="Run against a flowtm service URL.")
def bench(model_path, data, iters, warmup, include_binarization, out, server):
    """Single-sample inference latency and resource report."""
    _require_model(model_path, server)
    if server:
        import httpx

        info = httpx.get(f"{server.rstrip('/')}/model", timeout=30.0)
        info.raise_for_status()
        feature_names = info.json()["feature_names"]
        frame = _load_rows(data, feature_names)
        arr, good = _finite_rows(frame, feature_names)
        resp = httpx.post(
            f"{server.rstrip('/')}/bench",
            json={"rows": arr[good].tolist(), "iters": iters, "warmup": warmup,
                  "include_binarization": include_binarization},
            timeout=600.0,
        )
        resp.raise_for_status()
        payload = resp.json()
    else:
        bundle = load_model(model_path)
        if bundle.binarizer is None:
            raise SchemaError("model file has no embedded binarizer")
        frame = _load_rows(data, bundle.binarizer.feature_names)
        arr, good = _finite_rows(frame, bundle.binarizer.feature_names)
        rows = arr[good]
        if rows.shape[0] == 0:
            raise DataError("no usable rows in the benchmark input")
        size = len(serialize_model(bundle.model, bundle.binarizer, bundle.class_names))
        if include_binarization:
            report = evaluate.bench(bundle.model, None, warmup=warmup, iters=iters,
                                    binarizer=bundle.binarizer, raw_rows=rows,
                                    model_size_bytes=size)
        else:
            bits = bundle.binarizer.transform(rows)
            report = evaluate.bench(bundle.model, bits, warmup=warmup, iters=iters,
                                    model_size_bytes=size)
        payload = report.to_dict()
    text = json.dumps(payload, indent=2)
    click.echo(text)
    if out:
        if out.endswith(".csv"):
            atomic_write_text(out, evaluate.BenchReport(
                mean_us=payload["inference_time_us_mean"],
                std_us=payload["inference_time_us_std"],
                samples_measured=payload["samples_measured"],
                warmup=payload["warmup"],
                memory_kb=payload["memory_kb"],
                model_size_kb=payload["model_size_kb"],
                cpu_percent=payload["cpu_percent"],
                includes_binarization=payload["includes_binarization"],
            ).to_csv())
        else:
            atomic_write_text(out, text + "\n")


@cli.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--rows-per-class", type=int, default=200, show_default=True)
@click.option("--counts", default=None,
              help="Comma-separated per-class row counts (overrides --rows-per-class).")
@click.option("--classes", "num_classes", type=int, default=5, show_default=True)
@click.option("--separation", type=float, default=6.0, show_default=True,
              help="Distance between class profile means.")
@click.option("--seed", type=int, default=0)
def gen(out, rows_per_class, counts, num_classes, separation, seed):
    """Generate a reproducible synthetic flow table."""
    if counts:
        try:
            per_class = [int(v) for v in counts.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --counts value: {counts!r}") from exc
        num_classes = len(per_class)
    else:
        per_class = rows_per_class
    table = ds.gen_synthetic(per_class, seed=seed, num_classes=num_classes,
                             separation=separation)
    buf = io.StringIO()
    table.frame.to_csv(buf, index=False)
    atomic_write_text(out, buf.getvalue())
    click.echo(f"wrote {len(table)} rows to {out}")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(model_path, host, port):
    """Serve the model over HTTP (predict/explain/bench endpoints)."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(model_path=model_path), host=host, port=port)


def main():
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        code = 2 if isinstance(exc, click.UsageError) else exc.exit_code
        sys.stderr.write(json.dumps({"error": "usage", "message": exc.format_message()}) + "\n")
        sys.exit(code)
    except FlowTMError as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
