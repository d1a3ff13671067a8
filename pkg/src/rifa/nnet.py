"""Dense multi-layer perceptrons with exact backpropagation.

Everything runs in float64. Inputs may be a single vector of shape ``(d,)``
or a batch of row vectors of shape ``(B, d)``; outputs follow the same
convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("identity", "tanh", "relu", "sigmoid", "softmax")
CHECKPOINT_FORMAT = "rifa-mlp"
CHECKPOINT_VERSION = 1
_TINY = np.finfo(np.float64).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)

LossFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class ContractError(ValueError):
    """Raised when shapes or argument contracts do not hold."""


class NonFiniteError(FloatingPointError):
    """A NaN or inf showed up in a forward or backward pass."""

    def __init__(self, layer: int, stage: str = "forward"):
        super().__init__(f"non-finite value in {stage} pass at layer {layer}")
        self.layer = layer
        self.stage = stage


@dataclass
class Layer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Mlp:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ContractError("an MLP needs at least one layer")
        for idx, layer in enumerate(self.layers):
            layer.weight = np.asarray(layer.weight, dtype=np.float64)
            layer.bias = np.asarray(layer.bias, dtype=np.float64)
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[0],):
                raise ContractError(f"layer {idx}: weight/bias shapes disagree")
            if layer.activation not in ACTIVATIONS:
                raise ContractError(f"layer {idx}: unknown activation {layer.activation!r}")
            if layer.activation == "softmax" and idx != len(self.layers) - 1:
                raise ContractError("softmax is only allowed on the final layer")
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise ContractError(f"layer {idx}: non-finite parameters")
        for idx in range(len(self.layers) - 1):
            if self.layers[idx].out_dim != self.layers[idx + 1].in_dim:
                raise ContractError(
                    f"layer {idx} out_dim {self.layers[idx].out_dim} does not match "
                    f"layer {idx + 1} in_dim {self.layers[idx + 1].in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


@dataclass
class GradientBundle:
    """Partial derivatives mirroring ``Mlp.arrays()`` plus the loss value."""

    grads: list[np.ndarray]
    loss: float = 0.0

    @classmethod
    def zeros_like(cls, mlp: Mlp) -> "GradientBundle":
        return cls([np.zeros_like(a) for a in mlp.arrays()])


def zero_grads(bundle: GradientBundle) -> None:
    for g in bundle.grads:
        g.fill(0.0)
    bundle.loss = 0.0


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    hidden: str = "relu",
    output: str = "identity",
) -> Mlp:
    """Glorot-uniform weights, zero biases. ``sizes`` includes input and output dims."""
    if len(sizes) < 2:
        raise ContractError("sizes needs at least input and output dims")
    layers = []
    for idx, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = output if idx == len(sizes) - 2 else hidden
        layers.append(Layer(weight, np.zeros(fan_out), act))
    return Mlp(layers)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # saturated logits round to exactly 0 or 1; keep the open interval
    return np.clip(out, _TINY, _BELOW_ONE)


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "identity":
        return z
    if act == "tanh":
        return np.tanh(z)
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sigmoid":
        return sigmoid(z)
    return softmax(z)


def _activation_backward(z: np.ndarray, a: np.ndarray, g: np.ndarray, act: str) -> np.ndarray:
    if act == "identity":
        return g
    if act == "tanh":
        return g * (1.0 - a * a)
    if act == "relu":
        return g * (z > 0.0)
    if act == "sigmoid":
        return g * a * (1.0 - a)
    return a * (g - (g * a).sum(axis=-1, keepdims=True))


@dataclass
class ForwardCache:
    """Per-layer (input, pre-activation, output) kept for the backward pass."""

    single: bool
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


def forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != mlp.in_dim:
        raise ContractError(f"input has shape {x.shape}, network expects last dim {mlp.in_dim}")
    if not np.isfinite(h).all():
        raise ContractError("input contains non-finite values")
    cache = ForwardCache(single)
    for idx, layer in enumerate(mlp.layers):
        z = h @ layer.weight.T + layer.bias
        a = _activate(z, layer.activation)
        if not np.isfinite(a).all():
            raise NonFiniteError(idx)
        cache.inputs.append(h)
        cache.pre.append(z)
        cache.post.append(a)
        h = a
    return (h[0] if single else h), cache


def backward(
    mlp: Mlp,
    cache: ForwardCache,
    grad_out: np.ndarray,
    into: list[np.ndarray] | None = None,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``dL/d(output)``.

    Returns parameter gradients (ordered like ``mlp.arrays()``) and
    ``dL/d(input)``. When ``into`` is given the gradients are added to it
    in place and that list is returned.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    grads = into if into is not None else [np.zeros_like(a) for a in mlp.arrays()]
    for idx in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[idx]
        dz = _activation_backward(cache.pre[idx], cache.post[idx], g, layer.activation)
        grads[2 * idx] += dz.T @ cache.inputs[idx]
        grads[2 * idx + 1] += dz.sum(axis=0)
        g = dz @ layer.weight
        if not np.isfinite(g).all():
            raise NonFiniteError(idx, "backward")
    return grads, (g[0] if cache.single else g)


def mlp_apply(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    return forward(mlp, x)[0]


def mlp_gradients(
    loss_fn: LossFn,
    mlp: Mlp,
    x: np.ndarray,
    accumulate: GradientBundle | None = None,
) -> GradientBundle:
    """Gradients of ``loss_fn(mlp_apply(mlp, x))`` w.r.t. every parameter.

    ``loss_fn`` maps the network output to ``(loss, dloss/doutput)``.
    Passing ``accumulate`` sums into an existing bundle; callers zero it
    between batches with :func:`zero_grads`.
    """
    out, cache = forward(mlp, x)
    loss, g = loss_fn(out)
    bundle = accumulate if accumulate is not None else GradientBundle.zeros_like(mlp)
    backward(mlp, cache, g, into=bundle.grads)
    bundle.loss += float(loss)
    return bundle


def numeric_gradients(f: Callable[[], float], arrays: Sequence[np.ndarray], eps: float) -> list[np.ndarray]:
    """Central differences of ``f`` w.r.t. each entry of each array (perturbed in place)."""
    out = []
    for arr in arrays:
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f()
            flat[i] = orig - eps
            fm = f()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * eps)
        out.append(num)
    return out


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        if a.shape != n.shape:
            raise ContractError("gradient shapes differ")
        denom = np.maximum(1e-12, np.abs(a) + np.abs(n))
        if a.size:
            worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def grad_check(mlp: Mlp, loss_fn: LossFn, x: np.ndarray, eps: float = 1e-5) -> float:
    if eps <= 0:
        raise ContractError("eps must be positive")
    analytic = mlp_gradients(loss_fn, mlp, x).grads

    def f() -> float:
        return float(loss_fn(mlp_apply(mlp, x))[0])

    numeric = numeric_gradients(f, mlp.arrays(), eps)
    return max_relative_error(analytic, numeric)


@dataclass
class OptimizerState:
    algorithm: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None


def make_optimizer(params: Sequence[np.ndarray], algorithm: str = "adam", lr: float = 1e-3, **kw) -> OptimizerState:
    if algorithm not in ("sgd", "adam"):
        raise ContractError(f"unknown optimizer {algorithm!r}")
    if not lr >= 0:
        raise ContractError("learning rate must be non-negative")
    state = OptimizerState(algorithm=algorithm, lr=lr, **kw)
    if algorithm == "adam":
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    return state


def optimizer_step(state: OptimizerState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> OptimizerState:
    """Update ``params`` in place and advance the step counter."""
    if len(params) != len(grads):
        raise ContractError("params and grads have different lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"param shape {p.shape} vs grad shape {g.shape}")
    state.step += 1
    if state.algorithm == "sgd":
        for p, g in zip(params, grads):
            p -= state.lr * g
        return state
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        tmp = np.multiply(g, 1.0 - b1)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps), without temporaries
        np.multiply(v, 1.0 / c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.epsilon
        np.divide(m, tmp, out=tmp)
        tmp *= state.lr / c1
        p -= tmp
    return state


def pack_parameters(mlps: Sequence[Mlp]) -> tuple[np.ndarray, dict[int, list[np.ndarray]]]:
    """Move the parameters of ``mlps`` into one contiguous buffer.

    Layer weights and biases become views into the returned buffer, so a
    single optimizer update on it updates every network. Also returns a
    zeroed gradient buffer's views keyed by ``id(mlp)`` (same layout); the
    buffer itself is ``grads["flat"]``.
    """
    unique = list({id(m): m for m in mlps}.values())
    total = sum(a.size for m in unique for a in m.arrays())
    flat = np.empty(total)
    gflat = np.zeros(total)
    grads: dict = {"flat": gflat}
    offset = 0
    for mlp in unique:
        views = []
        for layer in mlp.layers:
            for name in ("weight", "bias"):
                arr = getattr(layer, name)
                view = flat[offset:offset + arr.size].reshape(arr.shape)
                view[...] = arr
                setattr(layer, name, view)
                views.append(gflat[offset:offset + arr.size].reshape(arr.shape))
                offset += arr.size
        grads[id(mlp)] = views
    return flat, grads


def mlp_to_dict(mlp: Mlp) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layers": [
            {
                "activation": l.activation,
                "shape": [l.out_dim, l.in_dim],
                "weight": l.weight.reshape(-1).tolist(),
                "bias": l.bias.tolist(),
            }
            for l in mlp.layers
        ],
    }


def mlp_from_dict(data: dict) -> Mlp:
    if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
        raise ContractError("not a version-1 rifa-mlp checkpoint")
    layers = []
    for spec in data["layers"]:
        out_dim, in_dim = spec["shape"]
        weight = np.array(spec["weight"], dtype=np.float64).reshape(out_dim, in_dim)
        layers.append(Layer(weight, np.array(spec["bias"], dtype=np.float64), spec["activation"]))
    return Mlp(layers)


def save_mlp(mlp: Mlp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(mlp)) + "\n")


def load_mlp(path: str | Path) -> Mlp:
    return mlp_from_dict(json.loads(Path(path).read_text()))
