"""Structural causal action model.

One small feed-forward network per next-action feature predicts that bit
from the parent vector ``[state | previous action]``, elementwise-gated by a
learned soft adjacency column.  Training alternates Adam updates of the
generating networks (Bernoulli log-likelihood) and of the gate logits
(likelihood plus a negative-log-prior sparsity penalty), with action
self-edges clamped to zero throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .buffer import Buffer
from .features import FeatureSchema

DEFAULT_HIDDEN = (64, 256, 256, 64)
PROB_CLIP = 1e-7

CHECKPOINT_FORMAT = "sca-checkpoint-v1"


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    lr: float = 3e-4
    lambda_reg: float = 1e-7
    edge_prior: float = 0.1
    iterations: int = 20_000
    batch_size: int = 256
    optimizer: str = "adam"
    seed: int = 0
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN
    weight_decay: float = 1e-2
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be 'float32' or 'float64', got {self.dtype!r}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.lambda_reg < 0:
            raise ValueError(f"lambda_reg must be nonnegative, got {self.lambda_reg}")
        if not 0.0 < self.edge_prior < 1.0:
            raise ValueError(f"edge_prior must lie in (0, 1), got {self.edge_prior}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.optimizer != "adam":
            raise ValueError(f"only the adam optimizer is supported, got {self.optimizer!r}")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "lambda_reg": self.lambda_reg,
            "edge_prior": self.edge_prior,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "hidden_sizes": list(self.hidden_sizes),
            "weight_decay": self.weight_decay,
            "dtype": self.dtype,
        }


class StackedMlp:
    """The per-child networks, stored stacked along a leading child axis.

    weights[l] has shape (children, fan_in, fan_out) so a whole training
    step is a chain of batched matmuls instead of a Python loop over nets.
    ReLU between hidden layers, sigmoid on the scalar output.

    Forward/backward reuse an internal workspace sized to the current batch:
    large per-iteration temporaries otherwise bounce through mmap and the
    page faults dominate the matmul cost.  Returned gradient arrays live in
    that workspace and are overwritten by the next backward call.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases
        self._ws_batch: int | None = None
        self._ws_z: list[np.ndarray] = []
        self._ws_dh: list[np.ndarray] = []
        self._ws_dw: list[np.ndarray] = []
        self._ws_db: list[np.ndarray] = []

    def _workspace(self, batch: int) -> None:
        if self._ws_batch == batch:
            return
        children = self.weights[0].shape[0]
        dtype = self.weights[0].dtype
        self._ws_z = [np.empty((children, batch, w.shape[2]), dtype=dtype) for w in self.weights]
        self._ws_dh = [np.empty((children, batch, w.shape[1]), dtype=dtype) for w in self.weights]
        self._ws_dw = [np.empty_like(w) for w in self.weights]
        self._ws_db = [np.empty_like(b) for b in self.biases]
        self._ws_batch = batch

    @classmethod
    def init(
        cls,
        children: int,
        input_dim: int,
        hidden_sizes: tuple[int, ...],
        rng: np.random.Generator,
        dtype=np.float64,
    ) -> "StackedMlp":
        sizes = (input_dim, *hidden_sizes, 1)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = math.sqrt(2.0 / fan_in)
            weights.append(rng.normal(0.0, scale, size=(children, fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros((children, 1, fan_out), dtype=dtype))
        return cls(weights, biases)

    @property
    def children(self) -> int:
        return self.weights[0].shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[2] for w in self.weights[:-1])

    def forward(self, xm: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Map gated inputs (children, batch, input_dim) to probabilities (children, batch).

        Returns the post-activation cache needed for backprop; cache[0] is
        the input itself.
        """
        self._workspace(xm.shape[1])
        cache = [xm]
        h = xm
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = np.matmul(h, w, out=self._ws_z[l])
            z += b  # in-place: the fused `@ w + b` broadcast path is several times slower
            h = z if l == last else np.maximum(z, 0.0, out=z)
            cache.append(h)
        probs = 1.0 / (1.0 + np.exp(-cache[-1][..., 0]))
        return probs, cache

    def backward(
        self,
        cache: list[np.ndarray],
        dz_out: np.ndarray,
        need_param_grads: bool = True,
        need_input_grads: bool = True,
    ) -> tuple[list[np.ndarray] | None, list[np.ndarray] | None, np.ndarray | None]:
        """Backprop from the output pre-activation gradient (children, batch, 1)."""
        self._workspace(dz_out.shape[1])
        dweights: list[np.ndarray] | None = [None] * len(self.weights) if need_param_grads else None
        dbiases: list[np.ndarray] | None = [None] * len(self.biases) if need_param_grads else None
        dz = dz_out
        for l in range(len(self.weights) - 1, -1, -1):
            if need_param_grads:
                dweights[l] = np.matmul(cache[l].transpose(0, 2, 1), dz, out=self._ws_dw[l])
                dbiases[l] = dz.sum(axis=1, keepdims=True, out=self._ws_db[l])
            if l == 0 and not need_input_grads:
                return dweights, dbiases, None
            dh = np.matmul(dz, self.weights[l].transpose(0, 2, 1), out=self._ws_dh[l])
            if l > 0:
                dz = np.multiply(dh, cache[l] > 0.0, out=dh)
        return dweights, dbiases, dh

    def copy(self) -> "StackedMlp":
        return StackedMlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


class Adam:
    """Adaptive-moment gradient descent over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._scratch = [np.empty_like(p) for p in params]
        self.t = 0

    def update(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v, s in zip(self.params, grads, self.m, self.v, self._scratch):
            np.multiply(g, 1.0 - self.beta1, out=s)
            m *= self.beta1
            m += s
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v *= self.beta2
            v += s
            np.divide(v, bc2, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / bc1
            p -= s


def self_edge_mask(state_dim: int, child_dim: int) -> np.ndarray:
    """(parent_dim, child_dim) mask that zeroes each action's own-parent gate."""
    mask = np.ones((state_dim + child_dim, child_dim))
    for i in range(child_dim):
        mask[state_dim + i, i] = 0.0
    return mask


@dataclass
class ScaModel:
    state_dim: int
    child_dim: int
    mlp: StackedMlp
    gate_logits: np.ndarray  # (parent_dim, child_dim)
    schema_fingerprint: str = ""
    clip_events: int = 0
    loss_trace: dict = field(default_factory=lambda: {"causal": [], "total": []})

    def __post_init__(self) -> None:
        self._mask = self_edge_mask(self.state_dim, self.child_dim).astype(self.gate_logits.dtype)
        if self.gate_logits.shape != self._mask.shape:
            raise ValueError(
                f"gate logits shape {self.gate_logits.shape} does not match "
                f"(state_dim + child_dim, child_dim) = {self._mask.shape}"
            )
        self._xm_buffer: np.ndarray | None = None

    @property
    def parent_dim(self) -> int:
        return self.state_dim + self.child_dim

    @classmethod
    def init(
        cls,
        state_dim: int,
        child_dim: int,
        hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN,
        seed: int = 0,
        schema_fingerprint: str = "",
        dtype=np.float64,
    ) -> "ScaModel":
        rng = np.random.default_rng(seed)
        parent_dim = state_dim + child_dim
        mlp = StackedMlp.init(child_dim, parent_dim, hidden_sizes, rng, dtype=dtype)
        return cls(
            state_dim=state_dim,
            child_dim=child_dim,
            mlp=mlp,
            gate_logits=np.zeros((parent_dim, child_dim), dtype=dtype),
            schema_fingerprint=schema_fingerprint,
        )

    def gates(self) -> np.ndarray:
        """Soft adjacency (parent_dim, child_dim): sigmoid(logits) with self-edges clamped to 0."""
        return (1.0 / (1.0 + np.exp(-self.gate_logits))) * self._mask

    def _masked_inputs(self, x: np.ndarray) -> np.ndarray:
        # (B, P) -> (A, B, P): child i sees the parents scaled by gate column i
        dtype = self.mlp.weights[0].dtype
        shape = (self.child_dim, x.shape[0], self.parent_dim)
        if self._xm_buffer is None or self._xm_buffer.shape != shape or self._xm_buffer.dtype != dtype:
            self._xm_buffer = np.empty(shape, dtype=dtype)
        return np.multiply(x[None, :, :], self.gates().T[:, None, :], out=self._xm_buffer)

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        """Per-child activation probabilities for a batch of parent vectors (B, P) -> (B, A)."""
        x = np.asarray(x, dtype=float)
        probs, _ = self.mlp.forward(self._masked_inputs(x))
        return probs.T

    def forward(self, state_bits: np.ndarray, prev_action_bits: np.ndarray) -> np.ndarray:
        """P(next-action bit | state, previous action) for every child action."""
        parent = np.concatenate([np.asarray(state_bits), np.asarray(prev_action_bits)]).astype(float)
        if parent.shape != (self.parent_dim,):
            raise ValueError(f"expected parent vector of length {self.parent_dim}, got {parent.shape}")
        return self.predict_batch(parent[None, :])[0]

    def copy(self) -> "ScaModel":
        clone = ScaModel(
            state_dim=self.state_dim,
            child_dim=self.child_dim,
            mlp=self.mlp.copy(),
            gate_logits=self.gate_logits.copy(),
            schema_fingerprint=self.schema_fingerprint,
            clip_events=self.clip_events,
        )
        clone.loss_trace = {k: list(v) for k, v in self.loss_trace.items()}
        return clone


def bernoulli_nll(probs: np.ndarray, targets: np.ndarray, clip: float = PROB_CLIP) -> tuple[float, int]:
    """Mean over batch of the summed per-child Bernoulli negative log-likelihood.

    ``probs`` and ``targets`` are (children, batch).  Probabilities are
    clipped into [clip, 1-clip] before the log; the number of clipped entries
    is returned so silent saturation stays visible.
    """
    clipped = 0
    if clip > 0.0:
        clipped = int(np.count_nonzero((probs < clip) | (probs > 1.0 - clip)))
        probs = np.clip(probs, clip, 1.0 - clip)
    # selecting the observed branch avoids 0 * -inf when probs hit exactly 0 or 1
    with np.errstate(divide="ignore"):
        ll = np.where(targets == 1.0, np.log(probs), np.log1p(-probs))
    return float(-ll.sum(axis=0).mean()), clipped


def causal_loss(model: ScaModel, batch: tuple[np.ndarray, np.ndarray], stats: dict | None = None) -> float:
    """Negative log-likelihood of the observed next-action bits under the model.

    ``batch`` is (parent vectors (B, P), action bits (B, A)).
    """
    x, y = batch
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    probs, _ = model.mlp.forward(model._masked_inputs(x))
    value, clipped = bernoulli_nll(probs, y.T)
    if stats is not None:
        stats["clipped"] = stats.get("clipped", 0) + clipped
    return value


def reg_loss(gates: np.ndarray, lambda_reg: float, edge_prior: float) -> float:
    """Sparsity penalty: lambda * sum of gates * (-log prior edge probability)."""
    if not 0.0 < edge_prior < 1.0:
        raise ValueError(f"edge_prior must lie in (0, 1), got {edge_prior}")
    return float(-lambda_reg * math.log(edge_prior) * np.asarray(gates).sum())


def _loss_and_grads(
    model: ScaModel,
    x: np.ndarray,
    y: np.ndarray,
    need_param_grads: bool,
    need_gate_grads: bool,
    xm: np.ndarray | None = None,
    stats: dict | None = None,
) -> tuple[float, list[np.ndarray] | None, np.ndarray | None]:
    """One forward/backward pass of the causal loss.

    Gradients use the exact sigmoid-Bernoulli form (p - y); clipping only
    stabilizes the reported loss value.  Returns (loss, flat param grads as
    [W0, b0, W1, b1, ...], gate-logit grads).
    """
    batch = x.shape[0]
    if xm is None:
        xm = model._masked_inputs(x)
    probs, cache = model.mlp.forward(xm)
    yt = y.T
    loss, clipped = bernoulli_nll(probs, yt)
    if stats is not None:
        stats["clipped"] = stats.get("clipped", 0) + clipped
    dz_out = ((probs - yt) / batch)[..., None]
    dweights, dbiases, dxm = model.mlp.backward(
        cache, dz_out, need_param_grads=need_param_grads, need_input_grads=need_gate_grads
    )
    param_grads = None
    if need_param_grads:
        param_grads = []
        for dw, db in zip(dweights, dbiases):
            param_grads.extend((dw, db))
    gate_grads = None
    if need_gate_grads:
        dgate_cols = np.einsum("abp,bp->pa", dxm, x)  # d loss / d gates
        raw = 1.0 / (1.0 + np.exp(-model.gate_logits))
        gate_grads = dgate_cols * raw * (1.0 - raw) * model._mask
    return loss, param_grads, gate_grads


def reg_grad_logits(model: ScaModel, lambda_reg: float, edge_prior: float) -> np.ndarray:
    """Gradient of the sparsity penalty with respect to the gate logits."""
    if not 0.0 < edge_prior < 1.0:
        raise ValueError(f"edge_prior must lie in (0, 1), got {edge_prior}")
    raw = 1.0 / (1.0 + np.exp(-model.gate_logits))
    return (-lambda_reg * math.log(edge_prior)) * raw * (1.0 - raw) * model._mask


def train(buffer: Buffer, config: TrainConfig, schema: FeatureSchema | None = None) -> ScaModel:
    """Fit the model by alternating generator and gate updates.

    Each iteration samples one mini-batch, updates the generating networks on
    the causal loss with gates held fixed, then re-evaluates at the new
    weights and updates the gate logits on causal loss plus sparsity penalty
    with the networks held fixed.  Deterministic for a fixed seed and buffer.

    The generator step applies L2 weight decay: without it the networks
    absorb input scale into their first layer and the gate values stay
    unidentified near initialization, so no amount of sparsity pressure
    separates true from spurious edges.
    """
    if len(buffer) == 0:
        raise ValueError("buffer must be nonempty")
    state_dim = int(buffer.meta.get("state_dim", buffer.records[0].state.shape[0]))
    child_dim = int(buffer.meta.get("action_dim", buffer.records[0].action.shape[0]))
    if schema is not None and (schema.state_dim != state_dim or schema.action_dim != child_dim):
        raise ValueError(
            f"schema dims ({schema.state_dim}, {schema.action_dim}) do not match "
            f"buffer dims ({state_dim}, {child_dim})"
        )
    dtype = np.dtype(config.dtype)
    states, prev, actions = buffer.arrays(dtype=dtype)
    x_all = np.concatenate([states, prev], axis=1)
    y_all = actions

    rng = np.random.default_rng(config.seed)
    model = ScaModel.init(
        state_dim=state_dim,
        child_dim=child_dim,
        hidden_sizes=config.hidden_sizes,
        seed=int(rng.integers(2**31 - 1)),
        schema_fingerprint=schema.fingerprint() if schema is not None else "",
        dtype=dtype,
    )
    net_params: list[np.ndarray] = []
    for w, b in zip(model.mlp.weights, model.mlp.biases):
        net_params.extend((w, b))
    opt_nets = Adam(net_params, lr=config.lr)
    opt_gates = Adam([model.gate_logits], lr=config.lr)
    stats: dict = {}
    n = x_all.shape[0]

    for iteration in range(config.iterations):
        idx = rng.integers(0, n, size=config.batch_size)
        xb = x_all[idx]
        yb = y_all[idx]
        xm = model._masked_inputs(xb)

        loss_delta, param_grads, _ = _loss_and_grads(
            model, xb, yb, need_param_grads=True, need_gate_grads=False, xm=xm, stats=stats
        )
        if config.weight_decay > 0.0:
            for param, grad in zip(net_params, param_grads):
                grad += dtype.type(2.0 * config.weight_decay) * param
        opt_nets.update(param_grads)

        # gates unchanged by the generator step, so the masked inputs are reusable
        loss_eta, _, gate_grads = _loss_and_grads(
            model, xb, yb, need_param_grads=False, need_gate_grads=True, xm=xm, stats=stats
        )
        penalty = reg_loss(model.gates(), config.lambda_reg, config.edge_prior)
        gate_grads += reg_grad_logits(model, config.lambda_reg, config.edge_prior)
        opt_gates.update([gate_grads])

        total = loss_eta + penalty
        if not (math.isfinite(loss_delta) and math.isfinite(total)):
            raise TrainingDiverged(iteration, total)
        model.loss_trace["causal"].append(loss_delta)
        model.loss_trace["total"].append(total)

    model.clip_events = stats.get("clipped", 0)
    return _canonical_float64(model)


def _canonical_float64(model: ScaModel) -> ScaModel:
    """Upcast a (possibly float32-trained) model to the canonical float64 form."""
    if model.gate_logits.dtype == np.float64:
        return model
    mlp = StackedMlp(
        [w.astype(np.float64) for w in model.mlp.weights],
        [b.astype(np.float64) for b in model.mlp.biases],
    )
    out = ScaModel(
        state_dim=model.state_dim,
        child_dim=model.child_dim,
        mlp=mlp,
        gate_logits=model.gate_logits.astype(np.float64),
        schema_fingerprint=model.schema_fingerprint,
        clip_events=model.clip_events,
    )
    out.loss_trace = model.loss_trace
    return out


def gate_graph(model: ScaModel, threshold: float = 0.5) -> np.ndarray:
    """Binary parent->child adjacency from thresholding the learned gates."""
    return (model.gates() > threshold).astype(np.uint8)


def save_checkpoint(model: ScaModel, config: TrainConfig, path: str) -> None:
    """Serialize the model as JSON with exact float64 round-trip."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "schema_fingerprint": model.schema_fingerprint,
        "state_dim": model.state_dim,
        "child_dim": model.child_dim,
        "hidden_sizes": list(model.mlp.hidden_sizes),
        "weights": [w.tolist() for w in model.mlp.weights],
        "biases": [b.tolist() for b in model.mlp.biases],
        "gate_logits": model.gate_logits.tolist(),
        "config": config.to_dict(),
        "loss_trace": model.loss_trace,
        "clip_events": model.clip_events,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle)
        handle.write("\n")


def load_checkpoint(path: str) -> tuple[ScaModel, TrainConfig]:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not an SCA checkpoint: {path}")
    mlp = StackedMlp(
        [np.asarray(w, dtype=float) for w in doc["weights"]],
        [np.asarray(b, dtype=float) for b in doc["biases"]],
    )
    model = ScaModel(
        state_dim=int(doc["state_dim"]),
        child_dim=int(doc["child_dim"]),
        mlp=mlp,
        gate_logits=np.asarray(doc["gate_logits"], dtype=float),
        schema_fingerprint=doc.get("schema_fingerprint", ""),
        clip_events=int(doc.get("clip_events", 0)),
    )
    model.loss_trace = doc.get("loss_trace", {"causal": [], "total": []})
    config = TrainConfig(**{**doc["config"], "hidden_sizes": tuple(doc["config"]["hidden_sizes"])})
    return model, config
