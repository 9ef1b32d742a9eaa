"""Self-contained model files: header, automaton states, binarizer parameters.

Single versioned binary format, fixed little-endian, so a file trained
anywhere can serve inference anywhere. Serialization is a pure function of
the model content, which makes seeded training runs byte-comparable. A
JSON-equivalent export exists for inspection.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .binarize import FlowBinarizer, QuantileBinner, Standardizer
from .errors import ModelFormatError
from .tm import MachineConfig, TsetlinMachine

MAGIC = b"FTM1"
FORMAT_VERSION = 1

__all__ = ["ModelBundle", "serialize_model", "deserialize_model", "save_model",
           "load_model", "model_to_json", "atomic_write_bytes"]


@dataclass
class ModelBundle:
    """A trained machine plus the binarizer and class names it was fit with."""

    model: TsetlinMachine
    binarizer: FlowBinarizer | None = None
    class_names: list[str] | None = None

    def predict_rows(self, raw_rows: np.ndarray, return_scores: bool = False):
        if self.binarizer is None:
            raise ModelFormatError("model file carries no binarizer; cannot take raw rows")
        bits = self.binarizer.transform(raw_rows)
        return self.model.predict_bits(bits, return_scores=return_scores)

    @property
    def feature_names(self) -> list[str]:
        return self.binarizer.feature_names if self.binarizer else []


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _read_str(buf: memoryview, pos: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("<H", buf, pos)
    pos += 2
    return bytes(buf[pos:pos + length]).decode("utf-8"), pos + length


def serialize_model(model: TsetlinMachine, binarizer: FlowBinarizer | None = None,
                    class_names: list[str] | None = None) -> bytes:
    cfg = model.config
    lo = int(model.ta_state.min(initial=1))
    hi = int(model.ta_state.max(initial=1))
    if lo < 1 or hi > 2 * cfg.state_depth:
        raise ModelFormatError(
            f"automaton states [{lo}, {hi}] outside [1, {2 * cfg.state_depth}]"
        )
    compact = cfg.state_depth * 2 <= 256
    state_dtype = 1 if compact else 2
    parts = [MAGIC]
    parts.append(struct.pack(
        "<IIIIIdIIIIQ",
        FORMAT_VERSION,
        1 if cfg.sparse else 0,
        cfg.num_classes,
        cfg.clauses_per_class,
        cfg.threshold,
        cfg.specificity,
        cfg.state_depth,
        cfg.max_included_literals or 0,
        model.n,
        cfg.epochs,
        cfg.rng_seed & (2**64 - 1),
    ))
    parts.append(model.rng_state.astype("<u8").tobytes())
    parts.append(struct.pack("<BBH", state_dtype, 0, 0))  # 0 = population std

    if binarizer is None:
        parts.append(struct.pack("<II", 0, 0))
    else:
        parts.append(struct.pack("<II", binarizer.n_features, binarizer.n_bins))
        std = binarizer.standardizer
        for f, name in enumerate(binarizer.feature_names):
            thresholds = binarizer.binner.thresholds[f]
            parts.append(_pack_str(name))
            parts.append(struct.pack(
                "<Bdd H", int(std.constant[f]), float(std.mean[f]), float(std.std[f]),
                len(thresholds),
            ))
            parts.append(thresholds.astype("<f8").tobytes())

    names = class_names or []
    parts.append(struct.pack("<H", len(names)))
    for name in names:
        parts.append(_pack_str(name))

    if compact:
        parts.append((model.ta_state.astype(np.int32) - 1).astype("<u1").tobytes())
    else:
        parts.append(model.ta_state.astype("<i2").tobytes())
    return b"".join(parts)


def deserialize_model(data: bytes) -> ModelBundle:
    if len(data) < 4 or data[:4] != MAGIC:
        raise ModelFormatError("not a flowtm model file")
    buf = memoryview(data)
    pos = 4
    try:
        (version, flags, num_classes, clauses, threshold, specificity, depth,
         cap, n_bits, epochs, seed) = struct.unpack_from("<IIIIIdIIIIQ", buf, pos)
        pos += struct.calcsize("<IIIIIdIIIIQ")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported format version {version}")
        rng_state = np.frombuffer(buf, dtype="<u8", count=2, offset=pos).copy()
        pos += 16
        state_dtype, std_convention, _ = struct.unpack_from("<BBH", buf, pos)
        pos += 4
        if std_convention != 0:
            raise ModelFormatError("unknown std convention flag")

        n_features, n_bins = struct.unpack_from("<II", buf, pos)
        pos += 8
        binarizer = None
        if n_features:
            names, constant, means, stds, thresholds = [], [], [], [], []
            for _ in range(n_features):
                name, pos = _read_str(buf, pos)
                names.append(name)
                const, mean, std, n_thr = struct.unpack_from("<Bdd H", buf, pos)
                pos += struct.calcsize("<Bdd H")
                thr = np.frombuffer(buf, dtype="<f8", count=n_thr, offset=pos).copy()
                pos += 8 * n_thr
                constant.append(bool(const))
                means.append(mean)
                stds.append(std)
                thresholds.append(thr)
            standardizer = Standardizer(
                mean=np.array(means), std=np.array(stds), constant=np.array(constant)
            )
            binner = QuantileBinner(
                n_bins=n_bins, thresholds=thresholds, constant=np.array(constant)
            )
            binarizer = FlowBinarizer(names, standardizer, binner)

        (n_names,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        class_names = []
        for _ in range(n_names):
            name, pos = _read_str(buf, pos)
            class_names.append(name)

        config = MachineConfig(
            num_classes=num_classes,
            clauses_per_class=clauses,
            threshold=threshold,
            specificity=specificity,
            state_depth=depth,
            sparse=bool(flags & 1),
            max_included_literals=cap or None,
            epochs=epochs,
            rng_seed=seed,
        )
        model = TsetlinMachine(config, n_bits)
        expected = num_classes * clauses * 2 * n_bits
        if state_dtype == 1:
            states = np.frombuffer(buf, dtype="<u1", count=expected, offset=pos)
            states = states.astype(np.int16) + 1
        elif state_dtype == 2:
            states = np.frombuffer(buf, dtype="<i2", count=expected, offset=pos).astype(np.int16)
        else:
            raise ModelFormatError(f"unknown state dtype code {state_dtype}")
    except (struct.error, ValueError) as exc:
        raise ModelFormatError(f"truncated or corrupt model file: {exc}") from exc

    model.ta_state = states.reshape(num_classes, clauses, 2 * n_bits).copy()
    model.rng_state = rng_state
    if model.ta_state.min(initial=1) < 1 or model.ta_state.max(initial=1) > 2 * depth:
        raise ModelFormatError("automaton states outside the declared range")
    _kernels.rebuild_include_masks(
        model.ta_state, depth, model.include_mask, model.include_count
    )
    if binarizer is not None and binarizer.total_bits != n_bits:
        raise ModelFormatError("binarizer layout does not match the model width")
    return ModelBundle(model=model, binarizer=binarizer, class_names=class_names or None)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a same-directory temp file and rename; no partial files."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_model(path, model: TsetlinMachine, binarizer: FlowBinarizer | None = None,
               class_names: list[str] | None = None) -> None:
    atomic_write_bytes(path, serialize_model(model, binarizer, class_names))


def load_model(path) -> ModelBundle:
    with open(path, "rb") as handle:
        return deserialize_model(handle.read())


def model_to_json(model: TsetlinMachine, binarizer: FlowBinarizer | None = None,
                  class_names: list[str] | None = None,
                  include_states: bool = True) -> dict:
    """JSON-equivalent export of the model file for inspection."""
    cfg = model.config
    out = {
        "format_version": FORMAT_VERSION,
        "config": {
            "num_classes": cfg.num_classes,
            "clauses_per_class": cfg.clauses_per_class,
            "threshold": cfg.threshold,
            "specificity": cfg.specificity,
            "state_depth": cfg.state_depth,
            "sparse": cfg.sparse,
            "max_included_literals": cfg.max_included_literals,
            "epochs": cfg.epochs,
            "rng_seed": cfg.rng_seed,
        },
        "num_feature_bits": model.n,
        "class_names": class_names or [],
        "binarizer": binarizer.to_dict() if binarizer else None,
    }
    if include_states:
        out["ta_state"] = model.ta_state.tolist()
    return out


def dump_model_json(path, model: TsetlinMachine, binarizer: FlowBinarizer | None = None,
                    class_names: list[str] | None = None,
                    include_states: bool = True) -> None:
    payload = model_to_json(model, binarizer, class_names, include_states)
    atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")
