"""Closed-form ridge oracle for structure recovery.

An executable counterpart to the gradient-trained model: synthetic sparse
mechanisms generate (parents, child bits) data, per-child ridge weights are
solved in closed form over a fixed feature map, and thresholding the weight
support recovers the parent sets.  Used to cross-validate the learned gate
graphs and to benchmark recovery quality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .buffer import Buffer, TimestepRecord


@dataclass
class SyntheticScm:
    """Ground-truth data-generating process for recovery experiments.

    Parents are i.i.d. binary; each child bit is Bernoulli with a logistic
    activation built from weighted true-parent bits plus optional pairwise
    interaction terms and additive Gaussian noise on the logit.  The last
    ``child_dim`` parent slots play the role of previous-action features, so
    the self positions (parent ``parent_dim - child_dim + i`` for child
    ``i``) are never edges.
    """

    parent_dim: int
    child_dim: int
    true_edges: np.ndarray  # (parent_dim, child_dim) binary
    linear_weights: np.ndarray  # (parent_dim, child_dim), zero off-support
    interaction_weights: list[dict]  # per child: {(j, k): weight}
    biases: np.ndarray  # (child_dim,)
    noise_scale: float


def allowed_edge_mask(parent_dim: int, child_dim: int) -> np.ndarray:
    mask = np.ones((parent_dim, child_dim), dtype=bool)
    offset = parent_dim - child_dim
    for i in range(child_dim):
        mask[offset + i, i] = False
    return mask


def generate_synthetic(
    parent_dim: int,
    child_dim: int,
    density: float,
    samples: int,
    seed: int,
    noise_scale: float = 0.15,
) -> tuple[np.ndarray, np.ndarray, SyntheticScm]:
    """Draw a random sparse mechanism and sample a dataset from it.

    Edges appear independently with probability ``density`` over the allowed
    (non-self) positions, except that every child is guaranteed at least one
    parent: a child with an empty mechanism is an unconditioned coin flip
    and has no structure to recover.  Linear weights are bounded away from
    zero so every edge is detectable.  Returns (parents (n, P),
    children (n, C), truth).
    """
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    if samples < 1:
        raise ValueError(f"samples must be at least 1, got {samples}")
    if child_dim < 1 or parent_dim <= child_dim:
        raise ValueError("need at least one child and more parents than children")
    rng = np.random.default_rng(seed)
    allowed = allowed_edge_mask(parent_dim, child_dim)
    edges = (rng.random((parent_dim, child_dim)) < density) & allowed
    for i in range(child_dim):
        if not edges[:, i].any():
            candidates = np.flatnonzero(allowed[:, i])
            edges[candidates[int(rng.integers(len(candidates)))], i] = True

    signs = rng.choice([-1.0, 1.0], size=(parent_dim, child_dim))
    magnitudes = rng.uniform(2.5, 4.0, size=(parent_dim, child_dim))
    linear = np.where(edges, signs * magnitudes, 0.0)

    interactions: list[dict] = []
    biases = np.zeros(child_dim)
    for i in range(child_dim):
        parents = np.flatnonzero(edges[:, i])
        pairs = [
            (int(parents[a]), int(parents[b]))
            for a in range(len(parents))
            for b in range(a + 1, len(parents))
        ]
        # at most two modest interaction terms per child: enough to exercise
        # the degree-2 feature map without letting them cancel a parent's
        # marginal effect (linear weights start at 1.5)
        chosen = [pairs[k] for k in rng.permutation(len(pairs))[:2]] if pairs else []
        terms = {
            pair: float(rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 0.6)) for pair in chosen
        }
        interactions.append(terms)
        # center the logit at the expected input so the child bit stays balanced
        biases[i] = -0.5 * linear[:, i].sum() - 0.25 * sum(terms.values())

    scm = SyntheticScm(
        parent_dim=parent_dim,
        child_dim=child_dim,
        true_edges=edges.astype(np.uint8),
        linear_weights=linear,
        interaction_weights=interactions,
        biases=biases,
        noise_scale=noise_scale,
    )
    x = (rng.random((samples, parent_dim)) < 0.5).astype(float)
    logits = x @ linear + biases[None, :]
    for i, terms in enumerate(interactions):
        for (j, k), w in terms.items():
            logits[:, i] += w * x[:, j] * x[:, k]
    logits += rng.normal(0.0, noise_scale, size=logits.shape)
    y = (rng.random(logits.shape) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    return x, y, scm


def dataset_to_buffer(x: np.ndarray, y: np.ndarray, child_dim: int) -> Buffer:
    """Wrap a synthetic (parents, children) dataset as a trainable buffer.

    The last ``child_dim`` parent columns become the previous-action block so
    the causal model's self-edge clamp lines up with the generator's.
    """
    split = x.shape[1] - child_dim
    records = [
        TimestepRecord(
            episode=0,
            t=t + 1,
            state=x[t, :split].astype(np.uint8),
            prev_action=x[t, split:].astype(np.uint8),
            action=y[t].astype(np.uint8),
        )
        for t in range(x.shape[0])
    ]
    meta = {"N": len(records), "T": len(records), "policy_name": "synthetic",
            "seed": None, "state_dim": split, "action_dim": child_dim}
    return Buffer(records=records, meta=meta)


def identity_features(x: np.ndarray) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Feature map: the parent bits themselves."""
    x = np.asarray(x, dtype=float)
    return x, [(j,) for j in range(x.shape[1])]


def pairwise_features(x: np.ndarray) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Feature map: intercept, parent bits, and all pairwise products of bits.

    Returns the design matrix and, per column, the tuple of constituent
    parent indices (needed to map recovered feature support back to
    parents; the intercept has no constituents).  Without the intercept the
    target mean leaks uniformly into every weight and drowns the support.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    columns = [np.ones((x.shape[0], 1)), x]
    constituents: list[tuple[int, ...]] = [()] + [(j,) for j in range(p)]
    for j in range(p):
        for k in range(j + 1, p):
            columns.append((x[:, j] * x[:, k])[:, None])
            constituents.append((j, k))
    return np.concatenate(columns, axis=1), constituents


FEATURE_MAPS = {"identity": identity_features, "pairwise": pairwise_features}


@dataclass
class RidgeFit:
    weights: np.ndarray  # (features, child_dim)
    lam: float
    feature_map_id: str
    constituents: list[tuple[int, ...]]
    parent_dim: int


def ridge_fit(
    x: np.ndarray,
    y: np.ndarray,
    lam: float,
    feature_map: str = "pairwise",
) -> RidgeFit:
    """Exact ridge solution per child over the chosen feature map.

    Solves (Phi^T Phi + lam I) W = Phi^T y via a Cholesky factorization of
    the regularized Gram matrix; lam > 0 keeps it positive definite, so the
    minimizer is unique.
    """
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    if y.ndim == 1:
        y = y[:, None]
    if feature_map not in FEATURE_MAPS:
        raise ValueError(f"unknown feature map {feature_map!r}")
    phi, constituents = FEATURE_MAPS[feature_map](x)
    if not np.all(np.isfinite(phi)):
        raise ValueError("feature matrix contains non-finite values")
    gram = phi.T @ phi + lam * np.eye(phi.shape[1])
    rhs = phi.T @ y
    factor = scipy.linalg.cho_factor(gram)
    weights = scipy.linalg.cho_solve(factor, rhs)
    return RidgeFit(
        weights=weights,
        lam=lam,
        feature_map_id=feature_map,
        constituents=constituents,
        parent_dim=x.shape[1],
    )


def recover_structure(fit: RidgeFit, threshold: float) -> np.ndarray:
    """Edges from weight support: |w| strictly above threshold marks all constituents.

    An interaction feature's weight implicates both of its parents, so the
    recovered parent set is the union of constituents over the supported
    features.
    """
    if threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    child_dim = fit.weights.shape[1]
    edges = np.zeros((fit.parent_dim, child_dim), dtype=np.uint8)
    for i in range(child_dim):
        for f in np.flatnonzero(np.abs(fit.weights[:, i]) > threshold):
            for parent in fit.constituents[f]:
                edges[parent, i] = 1
    return edges


def structural_metrics(predicted: np.ndarray, truth: np.ndarray) -> dict:
    """Precision/recall/F1 over edges plus structural Hamming distance."""
    predicted = np.asarray(predicted).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    tp = int(np.count_nonzero(predicted & truth))
    fp = int(np.count_nonzero(predicted & ~truth))
    fn = int(np.count_nonzero(~predicted & truth))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1, "shd": fp + fn}


def edge_agreement(a: np.ndarray, b: np.ndarray, allowed: np.ndarray | None = None) -> float:
    """Fraction of (allowed) edge positions on which two graphs agree."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if allowed is None:
        allowed = np.ones_like(a, dtype=bool)
    total = int(np.count_nonzero(allowed))
    same = int(np.count_nonzero((a == b) & allowed))
    return same / total if total else 1.0
