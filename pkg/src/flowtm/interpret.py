"""Per-decision explanation artifacts: votes, clause activations, feature credit.

Feature contributions split each firing clause's vote evenly across its
included literals and roll the credit up to the original features through
the binarizer layout, signed by clause polarity. Negative mass therefore
comes from firing negative-polarity clauses.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .binarize import FlowBinarizer
from .errors import ConfigError, StructuralError
from .tm import LiteralVector, TsetlinMachine

__all__ = ["Explanation", "explain", "contribution_vector", "render_rules",
           "export_explanation"]


@dataclass
class Explanation:
    """Votes, activation matrix, and feature-level credit for one sample."""

    sample_id: int
    class_votes: np.ndarray          # (C,) clamped inference sums
    clause_activations: np.ndarray   # (C, m) binary, positive clauses first
    feature_contributions: np.ndarray  # per original feature, signed
    predicted: int

    def to_dict(self, class_names: list[str] | None = None,
                feature_names: list[str] | None = None) -> dict:
        votes = {str(c): int(v) for c, v in enumerate(self.class_votes)}
        if class_names:
            votes = {class_names[c]: int(v) for c, v in enumerate(self.class_votes)}
        contributions = {str(f): float(v) for f, v in enumerate(self.feature_contributions)}
        if feature_names:
            contributions = {
                feature_names[f]: float(v)
                for f, v in enumerate(self.feature_contributions)
            }
        return {
            "sample_id": self.sample_id,
            "predicted": self.predicted,
            "class_votes": votes,
            "feature_contributions": contributions,
            "clause_activations": self.clause_activations.astype(int).tolist(),
        }


def _check_layout(model: TsetlinMachine, binarizer: FlowBinarizer) -> None:
    if binarizer.total_bits != model.n:
        raise StructuralError(
            f"binarizer emits {binarizer.total_bits} bits but the model expects {model.n}"
        )


def contribution_vector(model: TsetlinMachine, lits: LiteralVector, target_class: int,
                        binarizer: FlowBinarizer) -> np.ndarray:
    """Signed per-feature credit for one class on one sample."""
    _check_layout(model, binarizer)
    if not 0 <= target_class < model.num_classes:
        raise StructuralError(f"target class {target_class} out of range")
    outputs = model.clause_outputs(lits, mode="infer")[target_class]
    contributions = np.zeros(binarizer.n_features, dtype=np.float64)
    for j in np.flatnonzero(outputs):
        literals = model.included_literals(target_class, j)
        if literals.size == 0:
            continue
        credit = model.clause_polarity(j) / literals.size
        bit_idx = np.where(literals < model.n, literals, literals - model.n)
        np.add.at(contributions, binarizer.feature_of_bit[bit_idx], credit)
    return contributions


def explain(model: TsetlinMachine, lits: LiteralVector, binarizer: FlowBinarizer,
            sample_id: int = 0) -> Explanation:
    """All three explanation artifacts for one sample.

    Votes equal the machine's clamped inference sums exactly; contributions
    target the predicted class.
    """
    _check_layout(model, binarizer)
    scores = model.predict(lits)
    activations = model.clause_outputs(lits, mode="infer")
    return Explanation(
        sample_id=sample_id,
        class_votes=scores.scores,
        clause_activations=activations,
        feature_contributions=contribution_vector(model, lits, scores.predicted, binarizer),
        predicted=scores.predicted,
    )


def render_rules(model: TsetlinMachine, binarizer: FlowBinarizer,
                 reference_bits: np.ndarray, top_k: int = 5,
                 class_names: list[str] | None = None) -> str:
    """Human-readable IF/THEN rules for the most active clauses per class.

    Clauses are ranked by inference-mode firing frequency on the reference
    rows; empty clauses never fire and are omitted.
    """
    _check_layout(model, binarizer)
    if top_k < 1:
        raise ConfigError("top_k must be at least 1")
    names = class_names or [f"class_{c}" for c in range(model.num_classes)]
    packed = model.pack_features(reference_bits)
    fire_counts = np.zeros((model.num_classes, model.clauses_per_class), dtype=np.int64)
    _kernels.clause_fire_counts(model.include_mask, model.include_count, packed, fire_counts)

    lines = []
    for c in range(model.num_classes):
        ranked = sorted(
            range(model.clauses_per_class),
            key=lambda j: (-fire_counts[c, j], j),
        )
        emitted = 0
        for j in ranked:
            if emitted >= top_k:
                break
            literals = model.included_literals(c, j)
            if literals.size == 0:
                continue
            terms = []
            for lit in literals:
                if lit < model.n:
                    terms.append(binarizer.describe_bit(int(lit)))
                else:
                    terms.append("NOT " + binarizer.describe_bit(int(lit) - model.n))
            vote = "+1" if model.clause_polarity(j) > 0 else "-1"
            lines.append(
                f"IF {' AND '.join(terms)} THEN vote {vote} for {names[c]}"
                f"  [clause {j}, fired {int(fire_counts[c, j])}/{packed.shape[0]}]"
            )
            emitted += 1
    return "\n".join(lines)


def explanation_records(expl: Explanation, class_names: list[str] | None = None,
                        feature_names: list[str] | None = None) -> list[dict]:
    """Long-form rows (artifact, class, clause, feature, value), bit-stable order."""
    rows = []
    for c, vote in enumerate(expl.class_votes):
        name = class_names[c] if class_names else str(c)
        rows.append({"artifact": "vote", "class": name, "clause": "", "feature": "",
                     "value": int(vote)})
    num_classes, num_clauses = expl.clause_activations.shape
    for c in range(num_classes):
        name = class_names[c] if class_names else str(c)
        for j in range(num_clauses):
            rows.append({"artifact": "activation", "class": name, "clause": j,
                         "feature": "", "value": int(expl.clause_activations[c, j])})
    for f, value in enumerate(expl.feature_contributions):
        fname = feature_names[f] if feature_names else str(f)
        rows.append({"artifact": "contribution", "class": "", "clause": "",
                     "feature": fname, "value": float(value)})
    return rows


def export_explanation(expl: Explanation, path, fmt: str = "csv",
                       class_names: list[str] | None = None,
                       feature_names: list[str] | None = None) -> None:
    """Write one explanation as long-form CSV or as JSON."""
    if fmt == "csv":
        rows = explanation_records(expl, class_names, feature_names)
        with open(path, "w", newline="") as handle:
            writer = csv.DictWriter(
                handle, fieldnames=["artifact", "class", "clause", "feature", "value"]
            )
            writer.writeheader()
            writer.writerows(rows)
    elif fmt == "json":
        with open(path, "w") as handle:
            json.dump(expl.to_dict(class_names, feature_names), handle, indent=2)
            handle.write("\n")
    else:
        raise ConfigError(f"unknown export format {fmt!r}")
