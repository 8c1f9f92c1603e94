"""Dense feed-forward Q-network with hand-written backprop and Adam.

All arithmetic is float64. A network is a list of ``Layer`` objects; the last
layer is always linear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_NAME = "evsched-mlp"
FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "linear")


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "relu"


class MLP:
    """Parameters live in one flat float64 buffer; each layer's arrays are views into it."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, cur in zip(layers, layers[1:]):
            if cur.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError("layer dimensions do not chain")
        for layer in layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.biases.shape != (layer.weights.shape[0],):
                raise ValueError("bias shape does not match weights")
        if layers[-1].activation != "linear":
            raise ValueError("output layer must be linear")
        shapes = [s for layer in layers for s in (layer.weights.shape, layer.biases.shape)]
        self.flat = np.concatenate([np.ravel(a).astype(float) for layer in layers for a in (layer.weights, layer.biases)])
        views = _split(self.flat, shapes)
        self.layers = [Layer(w, b, layer.activation) for w, b, layer in zip(views[::2], views[1::2], layers)]
        self._shapes = shapes

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [layer.weights.shape[0] for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def copy(self) -> "MLP":
        return MLP([Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers])

    def zeros_like_params(self):
        """A flat zero buffer plus per-parameter views shaped like ``params()``."""
        flat = np.zeros_like(self.flat)
        return flat, _split(flat, self._shapes)

    def __call__(self, x):
        return forward(self, x)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "layer_sizes": self.sizes,
            "activations": [layer.activation for layer in self.layers],
            "layers": [{"weights": layer.weights.tolist(), "biases": layer.biases.tolist()} for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MLP":
        if data.get("format") != FORMAT_NAME or data.get("version") != FORMAT_VERSION:
            raise ValueError(f"not a {FORMAT_NAME} v{FORMAT_VERSION} document")
        layers = [
            Layer(np.array(entry["weights"], dtype=float), np.array(entry["biases"], dtype=float), act)
            for entry, act in zip(data["layers"], data["activations"], strict=True)
        ]
        net = cls(layers)
        if net.sizes != list(data["layer_sizes"]):
            raise ValueError("layer_sizes do not match the stored weights")
        return net


def _split(flat, shapes):
    out, start = [], 0
    for shape in shapes:
        n = shape[0] * shape[1] if len(shape) == 2 else shape[0]
        out.append(flat[start:start + n].reshape(shape))
        start += n
    return out


def init(layer_sizes, seed=0) -> MLP:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases, ReLU hidden layers."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if min(sizes) < 1:
        raise ValueError(f"layer sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        bound = np.sqrt(6.0 / fan_in)
        act = "linear" if i == len(sizes) - 2 else "relu"
        layers.append(Layer(rng.uniform(-bound, bound, (fan_out, fan_in)), np.zeros(fan_out), act))
    return MLP(layers)


def _forward_cache(net: MLP, x: np.ndarray):
    acts = [x]
    pre = []
    for layer in net.layers:
        z = acts[-1] @ layer.weights.T
        z += layer.biases
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
    return pre, acts


def forward(net: MLP, x) -> np.ndarray:
    """Q-values for one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    n_in = net.layers[0].weights.shape[1]
    if x.shape[-1] != n_in or x.ndim > 2:
        raise ValueError(f"expected input of length {n_in}, got shape {x.shape}")
    out = x
    for layer in net.layers:
        out = out @ layer.weights.T
        out += layer.biases
        if layer.activation == "relu":
            np.maximum(out, 0.0, out=out)
    return out


class Gradients(list):
    """Per-parameter gradient arrays (views) plus the flat buffer behind them."""

    def __init__(self, flat, arrays):
        super().__init__(arrays)
        self.flat = flat


def gradient_buffer(net: MLP) -> Gradients:
    flat, views = net.zeros_like_params()
    return Gradients(flat, views)


def batch_loss_grads(net: MLP, X, actions, targets, out: Gradients | None = None):
    """Mean squared TD error over a batch and its gradients.

    Only the Q-value of the taken action enters the loss, so the other
    output heads receive zero gradient. ``out`` (from ``gradient_buffer``)
    is overwritten and returned when given.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    n = X.shape[0]
    pre, acts = _forward_cache(net, X)
    rows = np.arange(n)
    err = acts[-1][rows, actions] - targets
    loss = float(err @ err) / n

    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = (2.0 / n) * err
    if out is None:
        out = gradient_buffer(net)
    flat, grads = out.flat, out
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            delta *= pre[i] > 0
        np.matmul(delta.T, acts[i], out=grads[2 * i])
        np.sum(delta, axis=0, out=grads[2 * i + 1])
        if i:
            delta = delta @ layer.weights
    return out, loss


def backward(net: MLP, x, action: int, td_target: float):
    """Gradients of ``(Q(x)[action] - td_target) ** 2`` for a single input.

    Returns ``(grads, loss)``; ``grads`` alternates weights and biases per layer.
    """
    if not 0 <= action < net.sizes[-1]:
        raise ValueError(f"action index {action} out of range")
    return batch_loss_grads(net, np.asarray(x, dtype=float)[None, :], [action], [td_target])


class Adam:
    """Adam optimiser state; ``step`` updates parameter arrays in place."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads, lr) -> None:
        """Update ``params`` (list of arrays) with matching ``grads`` in place."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(grads) != len(params):
            raise ValueError("gradients do not match parameters")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            # p -= lr * m_hat / (sqrt(v_hat) + eps)
            denom = np.sqrt(v * (1.0 / c2))
            denom += self.eps
            p -= (lr / c1) * m / denom


def apply_update(net: MLP, grads, optimizer: Adam, lr: float) -> MLP:
    """One Adam step on the whole network; uses the flat buffers when both sides have them."""
    flat = getattr(grads, "flat", None)
    if flat is not None:
        optimizer.step([net.flat], [flat], lr)
    else:
        optimizer.step(net.params(), grads, lr)
    return net


def save(net: MLP, path, extra: dict | None = None) -> None:
    doc = net.to_dict()
    if extra:
        doc["metadata"] = extra
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load(path) -> tuple[MLP, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return MLP.from_dict(doc), doc.get("metadata", {})
