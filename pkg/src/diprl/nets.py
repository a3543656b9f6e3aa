"""Dense-network engine: forward pass, exact reverse-mode gradients, Adam with
decoupled weight decay, and a finite-difference oracle used by the test suite.

Everything is float64 and purely functional: parameter containers are plain
values, updates return new containers, and repeated calls with identical inputs
are bit-identical. Only the MLP compositions this pipeline needs are supported
(no convolutions, no general autodiff graph).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class MlpParams:
    """Weights/biases for one dense head.

    ``weights[i]`` has shape (out_i, in_i), ``biases[i]`` shape (out_i,), and
    ``activations[i]`` is applied after layer i. The output activation is
    always "identity"; adjacent layer dims must chain.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must align")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ShapeError(f"layer {i}: unknown activation {act!r}")
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i}: in-dim {w.shape[1]} does not chain")
        if self.activations and self.activations[-1] != "identity":
            raise ShapeError("output layer activation must be identity")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1] if self.weights else -1

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0] if self.weights else -1

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


@dataclass
class GradBuffer:
    """Gradients, shape-congruent with the MlpParams they were taken from."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
        )


def init_mlp(layer_dims, rng, hidden_activation="relu") -> MlpParams:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer.

    ``layer_dims`` lists dims as (in, h1, ..., out); hidden layers get
    ``hidden_activation``, the output layer identity.
    """
    weights, biases, acts = [], [], []
    for i in range(len(layer_dims) - 1):
        fan_in = layer_dims[i]
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(layer_dims[i + 1], fan_in)))
        biases.append(rng.uniform(-bound, bound, size=layer_dims[i + 1]))
        acts.append(hidden_activation if i < len(layer_dims) - 2 else "identity")
    return MlpParams(weights, biases, acts)


def _apply_act(z, act):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, a, act):
    # derivative w.r.t. z, expressed from pre-activation z and activation a
    if act == "relu":
        return (z > 0.0).astype(z.dtype)
    if act == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Run the affine/activation chain. Accepts a vector or a (batch, in) array;
    a zero-depth network returns the input unchanged."""
    x = np.asarray(x, dtype=np.float64)
    if params.n_layers == 0:
        return x
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != expected {params.in_dim}")
    a = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        a = _apply_act(a @ w.T + b, act)
    return a


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping pre/post-activation values for the backward pass."""
    zs, acts_out = [], []
    a = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        z = a @ w.T + b
        a = _apply_act(z, act)
        zs.append(z)
        acts_out.append(a)
    return a, zs, acts_out


def mlp_backward_input(params: MlpParams, x: np.ndarray, upstream: np.ndarray):
    """Reverse-mode gradients for all parameters plus the input.

    ``x`` may be a vector or (batch, in); ``upstream`` is dL/d(output) with the
    matching shape. Parameter gradients are summed over the batch. Returns
    (GradBuffer, dL/dx).
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
        upstream = upstream[None, :]
    if params.n_layers == 0:
        return GradBuffer([], []), upstream[0] if squeeze else upstream
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != expected {params.in_dim}")
    if upstream.shape[-1] != params.out_dim:
        raise ShapeError(f"upstream dim {upstream.shape[-1]} != output {params.out_dim}")

    _, zs, acts_out = _forward_cached(params, x)
    d_weights = [None] * params.n_layers
    d_biases = [None] * params.n_layers
    g = upstream
    for i in range(params.n_layers - 1, -1, -1):
        dz = g * _act_grad(zs[i], acts_out[i], params.activations[i])
        a_prev = x if i == 0 else acts_out[i - 1]
        d_weights[i] = dz.T @ a_prev
        d_biases[i] = dz.sum(axis=0)
        g = dz @ params.weights[i]
    return GradBuffer(d_weights, d_biases), g[0] if squeeze else g


def mlp_backward(params: MlpParams, x: np.ndarray, upstream: np.ndarray) -> GradBuffer:
    """Parameter gradients only; see mlp_backward_input."""
    grads, _ = mlp_backward_input(params, x, upstream)
    return grads


def adam_step(
    params: MlpParams,
    grads: GradBuffer,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One Adam update with decoupled weight decay.

    Decay is applied multiplicatively (p <- p - lr*weight_decay*p) before the
    Adam delta, so with weight_decay=0 this is plain Adam. Returns new
    (MlpParams, AdamState); inputs are untouched.
    """
    if lr <= 0 or weight_decay < 0:
        raise ValueError("lr must be > 0 and weight_decay >= 0")
    for g in (*grads.d_weights, *grads.d_biases):
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient entries")

    t = state.step + 1
    corr1 = 1.0 - beta1**t
    corr2 = 1.0 - beta2**t

    def upd(p, g, m, v):
        m_new = beta1 * m + (1.0 - beta1) * g
        v_new = beta2 * v + (1.0 - beta2) * g * g
        p_new = p * (1.0 - lr * weight_decay)
        p_new = p_new - lr * (m_new / corr1) / (np.sqrt(v_new / corr2) + eps)
        return p_new, m_new, v_new

    new_w, new_b = [], []
    new_state = AdamState([], [], [], [], step=t)
    for p, g, m, v in zip(params.weights, grads.d_weights, state.m_weights, state.v_weights):
        p2, m2, v2 = upd(p, g, m, v)
        new_w.append(p2)
        new_state.m_weights.append(m2)
        new_state.v_weights.append(v2)
    for p, g, m, v in zip(params.biases, grads.d_biases, state.m_biases, state.v_biases):
        p2, m2, v2 = upd(p, g, m, v)
        new_b.append(p2)
        new_state.m_biases.append(m2)
        new_state.v_biases.append(v2)
    return MlpParams(new_w, new_b, list(params.activations)), new_state


def finite_diff_check(params: MlpParams, loss, epsilon: float = 1e-5) -> float:
    """Max discrepancy between analytic and central-difference gradients.

    ``loss(params)`` must return (value, GradBuffer); the analytic gradients
    are taken from the unperturbed call and every parameter entry is then
    perturbed by +-epsilon. Per-entry error is |num - ana| / max(|num|, |ana|,
    1e-3), so exact zeros agree at 0. Never raises: the result is a report.
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    _, analytic = loss(params)
    max_err = 0.0
    work = params.copy()

    def central(arr, idx):
        orig = arr[idx]
        arr[idx] = orig + epsilon
        up, _ = loss(work)
        arr[idx] = orig - epsilon
        down, _ = loss(work)
        arr[idx] = orig
        return (up - down) / (2.0 * epsilon)

    for arrs, grads in ((work.weights, analytic.d_weights), (work.biases, analytic.d_biases)):
        for arr, g in zip(arrs, grads):
            for idx in np.ndindex(arr.shape):
                num = central(arr, idx)
                ana = g[idx]
                denom = max(abs(num), abs(ana), 1e-3)
                max_err = max(max_err, abs(num - ana) / denom)
    return max_err


# --- checkpoint container -----------------------------------------------------
# One JSON file can hold several named heads; values are stored row-major.

CHECKPOINT_FORMAT = "diprl-checkpoint"
CHECKPOINT_VERSION = 1


def _head_to_obj(params: MlpParams) -> dict:
    return {
        "activations": list(params.activations),
        "layers": [
            {"shape": list(w.shape), "w": w.reshape(-1).tolist(), "b": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }


def _head_from_obj(obj: dict) -> MlpParams:
    weights, biases = [], []
    for layer in obj["layers"]:
        shape = tuple(layer["shape"])
        weights.append(np.array(layer["w"], dtype=np.float64).reshape(shape))
        biases.append(np.array(layer["b"], dtype=np.float64))
    return MlpParams(weights, biases, list(obj["activations"]))


def save_heads(path, heads: dict, meta: dict | None = None):
    """Write named MlpParams heads (plus metadata) to a versioned JSON file."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "heads": {name: _head_to_obj(p) for name, p in heads.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_heads(path):
    """Read a checkpoint file back as ({name: MlpParams}, meta)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    heads = {name: _head_from_obj(obj) for name, obj in doc["heads"].items()}
    return heads, doc.get("meta", {})


def params_equal(a: MlpParams, b: MlpParams) -> bool:
    """Bit-identical comparison of two heads."""
    if a.n_layers != b.n_layers or a.activations != b.activations:
        return False
    return all(
        wa.shape == wb.shape and np.array_equal(wa, wb) and np.array_equal(ba, bb)
        for wa, ba, wb, bb in zip(a.weights, a.biases, b.weights, b.biases)
    )
