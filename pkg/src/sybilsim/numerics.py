"""Self-contained Q-network arithmetic: a small rectifier MLP, mean absolute
error, exact reverse-mode gradients, and Adam.

Everything is plain numpy on float64. Parameters are a list of (W, b) pairs;
batches are row-major (batch, features).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN = (24, 24)


@dataclass
class MlpParams:
    """Weights of the 4-layer net: input, two 24-unit rectifier layers,
    linear output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def init_params(input_dim: int, output_dim: int, seed: int = 0,
                hidden: tuple[int, ...] = HIDDEN) -> MlpParams:
    """Uniform fan-in scaled init, deterministic for a given seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = [input_dim, *hidden, output_dim]
    weights, biases = [], []
    for nin, nout in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(nin)
        weights.append(rng.uniform(-bound, bound, size=(nin, nout)))
        biases.append(np.zeros(nout))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Q-values for one input vector or a (batch, d) matrix."""
    x_arr = np.asarray(x, dtype=np.float64)
    out, _ = forward_cached(params, x_arr)
    return out[0] if x_arr.ndim == 1 else out


def forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping pre-activations for the backward pass."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input has {x.shape[1]} features, net expects {params.weights[0].shape[0]}")
    act = x
    acts = [x]          # post-activation inputs to each layer
    pre = []            # pre-activations of hidden layers
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = act @ w + b
        if i < last:
            pre.append(z)
            act = np.maximum(z, 0.0)
            acts.append(act)
        else:
            act = z
    return act, (acts, pre)


def backward(params: MlpParams, cache, upstream: np.ndarray):
    """Gradients of sum(output * upstream) w.r.t. every weight and bias."""
    acts, pre = cache
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    delta = upstream
    for i in range(len(params.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0.0)
    return grads_w, grads_b


def param_gradients(params: MlpParams, x: np.ndarray, upstream: np.ndarray):
    """Convenience wrapper: forward then backward in one call."""
    out, cache = forward_cached(params, x)
    if np.ndim(upstream) == 1:
        upstream = np.atleast_2d(upstream)
    if upstream.shape != out.shape:
        raise ValueError(f"upstream shape {upstream.shape} != output {out.shape}")
    return backward(params, cache, upstream)


def mae_loss(pred: np.ndarray, target: np.ndarray):
    """Mean absolute error and its subgradient w.r.t. pred (0 at kinks)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return loss, grad


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 0.01) -> "AdamState":
        state = cls(lr=lr)
        state.m_w = [np.zeros_like(w) for w in params.weights]
        state.v_w = [np.zeros_like(w) for w in params.weights]
        state.m_b = [np.zeros_like(b) for b in params.biases]
        state.v_b = [np.zeros_like(b) for b in params.biases]
        return state


def adam_step(params: MlpParams, grads_w, grads_b, state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i in range(len(params.weights)):
        for value, grad, m, v in (
                (params.weights[i], grads_w[i], state.m_w[i], state.v_w[i]),
                (params.biases[i], grads_b[i], state.m_b[i], state.v_b[i])):
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            m_hat = m / c1
            v_hat = v / c2
            value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def save_params(path, params: MlpParams, extra: dict | None = None) -> None:
    """Versioned weight snapshot (npz: layer sizes plus row-major arrays)."""
    payload = {"format_version": np.array(1),
               "layer_sizes": np.array(params.layer_sizes)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    if extra:
        for key, value in extra.items():
            payload[f"extra_{key}"] = np.asarray(value)
    np.savez(path, **payload)


def load_params(path) -> tuple[MlpParams, dict]:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != 1:
            raise ValueError(f"unsupported snapshot version {version}")
        sizes = data["layer_sizes"]
        n_layers = len(sizes) - 1
        weights = [data[f"w{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
        extra = {key[len("extra_"):]: data[key]
                 for key in data.files if key.startswith("extra_")}
    return MlpParams(weights, biases), extra
