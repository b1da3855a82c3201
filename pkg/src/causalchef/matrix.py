"""Causal action matrix: build, prune, query, serialize.

Rows are next actions, columns are state features followed by
previous-action features; entry (i, j) is the learned probability of a
causal edge from parent feature j to action i.  Querying sums the row
entries over the currently active features.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSchema, active_indices
from .kitchen import MacroAction


class MatrixError(ValueError):
    """Raised on schema mismatches or malformed matrix files."""


@dataclass
class CausalActionMatrix:
    entries: np.ndarray  # (A, S+A)
    schema: FeatureSchema
    provenance: str = ""

    def __post_init__(self) -> None:
        expected = (self.schema.action_dim, self.schema.parent_dim)
        if self.entries.shape != expected:
            raise MatrixError(f"matrix shape {self.entries.shape} does not match schema {expected}")
        if np.any(self.entries < 0.0) or np.any(self.entries > 1.0):
            raise MatrixError("matrix entries must lie in [0, 1]")

    @property
    def fingerprint(self) -> str:
        return self.schema.fingerprint()


def _prune_action_block(entries: np.ndarray, state_dim: int) -> np.ndarray:
    """Zero the weaker edge of every bidirectional action-action pair.

    Edge parent j -> child i lives at entries[i, state_dim + j].  On an exact
    tie the edge whose parent action has the higher index is dropped.  State
    features are never children, so these pairs are the only possible
    2-cycles; self-columns are forced to zero as well.
    """
    out = entries.copy()
    n_actions = entries.shape[0]
    for i in range(n_actions):
        out[i, state_dim + i] = 0.0
    for i in range(n_actions):
        for j in range(i + 1, n_actions):
            j_to_i = out[i, state_dim + j]  # parent j, child i
            i_to_j = out[j, state_dim + i]  # parent i, child j
            if j_to_i > i_to_j:
                out[j, state_dim + i] = 0.0
            elif i_to_j > j_to_i:
                out[i, state_dim + j] = 0.0
            elif j_to_i != 0.0:
                # tie: drop the edge coming from the higher-index parent
                out[i, state_dim + j] = 0.0
    return out


def build_matrix(
    gates: np.ndarray,
    schema: FeatureSchema,
    provenance: str = "",
    expected_fingerprint: str = "",
) -> CausalActionMatrix:
    """Turn learned gates (parent_dim, child_dim) into the pruned score matrix."""
    gates = np.asarray(gates, dtype=float)
    if gates.shape != (schema.parent_dim, schema.action_dim):
        raise MatrixError(
            f"gates shape {gates.shape} does not match schema "
            f"({schema.parent_dim}, {schema.action_dim})"
        )
    if expected_fingerprint and expected_fingerprint != schema.fingerprint():
        raise MatrixError(
            f"schema fingerprint mismatch: gates trained against {expected_fingerprint}, "
            f"schema is {schema.fingerprint()}"
        )
    entries = _prune_action_block(gates.T, schema.state_dim)
    return CausalActionMatrix(entries=entries, schema=schema, provenance=provenance)


def query_score(
    matrix: CausalActionMatrix,
    state_bits: np.ndarray,
    prev_action_bits: np.ndarray,
    action: MacroAction | str,
) -> float:
    """Causal score: sum of the action's row entries over active features.

    Summation is sequential in column order so the result is bit-identical
    to a naive left-to-right scan of the row.
    """
    row = matrix.schema.action_index(action)
    active = active_indices(state_bits, prev_action_bits)
    entries = matrix.entries
    total = 0.0
    for j in active:
        total += entries[row, j]
    return float(total)


def query_all_scores(
    matrix: CausalActionMatrix,
    state_bits: np.ndarray,
    prev_action_bits: np.ndarray,
) -> np.ndarray:
    """Causal scores for every instructed action at once (same summation order)."""
    active = active_indices(state_bits, prev_action_bits)
    entries = matrix.entries
    scores = np.zeros(entries.shape[0])
    for j in active:
        scores += entries[:, j]
    return scores


def export_matrix(matrix: CausalActionMatrix, path: str, threshold: float | None = None) -> None:
    """Write the matrix as CSV: action rows, feature-named columns.

    Values are rendered with 17 significant digits so import reproduces them
    exactly.  ``threshold`` optionally zeroes small entries for visualization
    exports; it never alters the in-memory matrix.
    """
    entries = matrix.entries
    if threshold is not None:
        entries = np.where(entries < threshold, 0.0, entries)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["action", *matrix.schema.parent_names()])
        for i, action in enumerate(matrix.schema.action_features):
            writer.writerow([action, *(f"{v:.17g}" for v in entries[i])])


def import_matrix(path: str, schema: FeatureSchema, provenance: str = "") -> CausalActionMatrix:
    """Load a matrix CSV, validating header names, shape, and value range."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise MatrixError(f"empty matrix file: {path}")
    header = rows[0]
    if header != ["action", *schema.parent_names()]:
        raise MatrixError("matrix header does not match schema feature names")
    data_rows = rows[1:]
    if len(data_rows) != schema.action_dim:
        raise MatrixError(f"expected {schema.action_dim} action rows, got {len(data_rows)}")
    entries = np.zeros((schema.action_dim, schema.parent_dim))
    for i, row in enumerate(data_rows):
        if row[0] != schema.action_features[i]:
            raise MatrixError(f"row {i} names action {row[0]!r}, expected {schema.action_features[i]!r}")
        if len(row) != schema.parent_dim + 1:
            raise MatrixError(f"row {i} has {len(row) - 1} values, expected {schema.parent_dim}")
        values = np.asarray([float(v) for v in row[1:]])
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise MatrixError(f"row {i} contains out-of-range values")
        entries[i] = values
    return CausalActionMatrix(entries=entries, schema=schema, provenance=provenance)


def export_heatmap_triples(matrix: CausalActionMatrix, path: str, threshold: float | None = None) -> None:
    """Companion (parent, child, weight) CSV ordered column-major for plotting."""
    entries = matrix.entries
    if threshold is not None:
        entries = np.where(entries < threshold, 0.0, entries)
    names = matrix.schema.parent_names()
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["parent", "child", "weight"])
        for j, parent in enumerate(names):
            for i, child in enumerate(matrix.schema.action_features):
                writer.writerow([parent, child, f"{entries[i, j]:.17g}"])
