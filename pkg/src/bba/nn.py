"""Dense feature-extractor + linear-classifier network with hand-written backprop.

Parameters live in a flat dict keyed ``W0, b0, W1, b1, ...`` for the feature
extractor and ``Wc, bc`` for the classifier head. Weights are stored as
(in, out) so a forward layer is ``x @ W + b``.

Losses elsewhere in the package are written against probabilities and return
d(loss)/d(probs); :func:`softmax_backward` turns that into a logit gradient and
:meth:`Model.backward` pushes it through the network.
"""

from __future__ import annotations

import numpy as np

from . import binio
from .polarity import PolarityMap

EPS = 1e-12  # floor for every log / division by a probability

_ACTIVATIONS = ("tanh", "identity")


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax received non-finite logits")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs, dprobs):
    """Logit gradient given d(loss)/d(probs); rows are independent."""
    inner = np.sum(probs * dprobs, axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def safe_log(p):
    return np.log(np.maximum(p, EPS))


def cross_entropy(probs, label):
    """-log probs[label], with probs floored at EPS. Works row-wise on 2-D input."""
    probs = np.asarray(probs, dtype=np.float64)
    label = np.asarray(label)
    if np.any(label < 0) or np.any(label >= probs.shape[-1]):
        raise ValueError(f"label out of range for {probs.shape[-1]} classes")
    if probs.ndim == 1:
        return float(-safe_log(probs[int(label)]))
    picked = np.take_along_axis(probs, label.reshape(-1, 1).astype(np.int64), axis=1)[:, 0]
    return -safe_log(picked)


def kl_divergence(p, q):
    """KL(p || q) over the last axis. Terms with p == 0 contribute 0; q floored at EPS."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"kl_divergence shape mismatch: {p.shape} vs {q.shape}")
    terms = np.where(p > 0, p * (safe_log(p) - safe_log(q)), 0.0)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def entropy(p):
    p = np.asarray(p, dtype=np.float64)
    out = -np.where(p > 0, p * safe_log(p), 0.0).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


class Model:
    """phi = f o g: tanh dense layers (g) followed by a linear head (f).

    ``layer_dims = [D, h1, ..., F, K]``. With only ``[D, K]`` the feature
    extractor is empty and features are the raw inputs.
    """

    def __init__(self, layer_dims, activation="tanh", seed=None, params=None):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2 or min(layer_dims) < 1:
            raise ValueError(f"invalid layer_dims {layer_dims}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.layer_dims = layer_dims
        self.activation = activation
        self.frozen: set[str] = set()
        if params is not None:
            self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
            self._check_shapes()
        else:
            self.params = self._init_params(np.random.default_rng(seed))

    @property
    def n_hidden(self) -> int:
        return len(self.layer_dims) - 2

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def _shapes(self):
        dims = self.layer_dims
        shapes = {}
        for i in range(self.n_hidden):
            shapes[f"W{i}"] = (dims[i], dims[i + 1])
            shapes[f"b{i}"] = (dims[i + 1],)
        shapes["Wc"] = (dims[-2], dims[-1])
        shapes["bc"] = (dims[-1],)
        return shapes

    def _init_params(self, rng):
        params = {}
        for name, shape in self._shapes().items():
            if name.startswith("W"):
                scale = np.sqrt(1.0 / shape[0])
                params[name] = rng.normal(0.0, scale, size=shape)
            else:
                params[name] = np.zeros(shape)
        return params

    def _check_shapes(self):
        shapes = self._shapes()
        if set(shapes) != set(self.params):
            raise ValueError(f"parameter names {sorted(self.params)} do not match {sorted(shapes)}")
        for name, shape in shapes.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: shape {self.params[name].shape}, expected {shape}")

    @staticmethod
    def group(name: str) -> str:
        return "classifier" if name in ("Wc", "bc") else "features"

    def feature_names(self):
        return [n for n in self.params if self.group(n) == "features"]

    def copy(self) -> "Model":
        m = Model(self.layer_dims, self.activation, params=self.params)
        m.frozen = set(self.frozen)
        return m

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else z

    def forward(self, batch, cache=False):
        """Return ``(features, logits)``; with ``cache=True`` also the activations."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"batch shape {x.shape} incompatible with input dim {self.input_dim}")
        acts = [x]
        h = x
        for i in range(self.n_hidden):
            h = self._act(h @ self.params[f"W{i}"] + self.params[f"b{i}"])
            acts.append(h)
        logits = h @ self.params["Wc"] + self.params["bc"]
        if cache:
            return h, logits, acts
        return h, logits

    def predict_proba(self, batch):
        return softmax(self.forward(batch)[1])

    def predict(self, batch):
        return np.argmax(self.forward(batch)[1], axis=1)

    def backward(self, acts, dlogits, dfeatures=None):
        """Gradients of a scalar loss given d/dlogits (and optionally d/dfeatures)."""
        grads = {}
        feats = acts[-1]
        grads["Wc"] = feats.T @ dlogits
        grads["bc"] = dlogits.sum(axis=0)
        dh = dlogits @ self.params["Wc"].T
        if dfeatures is not None:
            dh = dh + dfeatures
        for i in reversed(range(self.n_hidden)):
            h = acts[i + 1]
            dz = dh * (1.0 - h * h) if self.activation == "tanh" else dh
            grads[f"W{i}"] = acts[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            if i > 0:
                dh = dz @ self.params[f"W{i}"].T
        return grads


def forward(model: Model, batch):
    return model.forward(batch)


def add_grads(a: dict, b: dict) -> dict:
    return {k: a[k] + b[k] for k in a}


def check_finite(arrays: dict, what="gradient") -> None:
    for name, g in arrays.items():
        if not np.all(np.isfinite(g)):
            layer = "classifier" if Model.group(name) == "classifier" else f"feature layer {name[1:]}"
            raise FloatingPointError(f"non-finite {what} in {layer} (parameter {name})")


class SGD:
    """SGD with heavy-ball momentum: v <- mu v + g; theta <- theta - lr v."""

    def __init__(self, lr=0.05, momentum=0.9, weight_decay=0.0):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, model: Model, grads: dict) -> None:
        for name, g in grads.items():
            if model.group(name) in model.frozen:
                continue
            if self.weight_decay and name.startswith("W"):
                g = g + self.weight_decay * model.params[name]
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            model.params[name] -= self.lr * v


def backward_and_step(model: Model, loss_fn, opt: SGD) -> float:
    """Evaluate ``loss_fn(model) -> (loss, grads)`` and apply one optimizer step."""
    loss, grads = loss_fn(model)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    check_finite(grads)
    opt.step(model, grads)
    check_finite(model.params, "parameter")
    return loss


def grad_check(loss_fn, model: Model, eps=1e-5, max_per_param=40, seed=0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(model)`` must return ``(loss, grads)``. Up to ``max_per_param``
    entries of every parameter are probed.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    rng = np.random.default_rng(seed)
    _, grads = loss_fn(model)
    worst = 0.0
    for name, theta in model.params.items():
        flat = theta.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_per_param else rng.choice(n, max_per_param, replace=False)
        g = grads[name].reshape(-1)
        for j in idx:
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn(model)[0]
            flat[j] = orig - eps
            down = loss_fn(model)[0]
            flat[j] = orig
            num = (up - down) / (2 * eps)
            ana = g[j]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


def save_checkpoint(path, model: Model, polarity: PolarityMap | None = None, meta=None) -> None:
    header = {
        "layer_dims": model.layer_dims,
        "activation": model.activation,
        "polarity": polarity.to_dict() if polarity is not None else None,
        "extra": meta or {},
    }
    arrays = {name: model.params[name] for name in sorted(model.params)}
    binio.write(path, "checkpoint", header, arrays)


def load_checkpoint(path):
    """Return ``(model, polarity_or_None, extra_meta)``."""
    header, arrays = binio.read(path, kind="checkpoint")
    model = Model(header["layer_dims"], header["activation"], params=arrays)
    pol = header.get("polarity")
    return model, (PolarityMap.from_dict(pol) if pol else None), header.get("extra", {})
