"""ReLU MLP forward pass, exact gradients, and Hessian-vector products.

The network structure is hard-wired (dense layers + ReLU, softmax
cross-entropy with an L2 penalty on all parameters), so derivatives are
written out by construction instead of going through a general autodiff
graph.  The Hessian-vector product is the Pearlmutter R-operator:
tangents are pushed through the forward pass and the backward pass is
differentiated once more, with no finite differences anywhere.

Loss convention: ``loss = data_weight * mean_CE + wd * ||theta||^2``.
``data_weight`` exists so tests can switch the data term off and work
against the analytically known pure-quadratic penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .rng import Rng

LayoutEntry = tuple[int, str, tuple[int, ...]]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one MLP; the parameter layout is a pure function of it."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    num_classes: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ParameterError("input_dim must be >= 1")
        if any(w < 1 for w in self.hidden_widths):
            raise ParameterError("all hidden widths must be >= 1")
        if self.num_classes < 2:
            raise ParameterError("num_classes must be >= 2")
        if self.activation != "relu":
            raise ParameterError("only relu activation is supported")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.num_classes)

    @property
    def num_layers(self) -> int:
        return len(self.hidden_widths) + 1

    def layout(self) -> tuple[LayoutEntry, ...]:
        dims = self.layer_dims
        entries: list[LayoutEntry] = []
        for layer in range(self.num_layers):
            entries.append((layer, "weight", (dims[layer], dims[layer + 1])))
            entries.append((layer, "bias", (dims[layer + 1],)))
        return tuple(entries)

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, _, shape in self.layout())


@dataclass
class ParamVector:
    """Flat float64 parameter vector plus the layout that interprets it."""

    layout: tuple[LayoutEntry, ...]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        expected = sum(int(np.prod(shape)) for _, _, shape in self.layout)
        if self.values.size != expected:
            raise DimensionError(
                f"value length {self.values.size} does not match layout size {expected}"
            )

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ParamVector":
        return cls(spec.layout(), np.zeros(spec.param_count))

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.values.copy())

    def views(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into the flat buffer, one pair per layer."""
        pairs = []
        offset = 0
        for i in range(0, len(self.layout), 2):
            _, _, wshape = self.layout[i]
            _, _, bshape = self.layout[i + 1]
            wn = int(np.prod(wshape))
            bn = int(np.prod(bshape))
            w = self.values[offset : offset + wn].reshape(wshape)
            b = self.values[offset + wn : offset + wn + bn]
            pairs.append((w, b))
            offset += wn + bn
        return pairs


def require_same_layout(a: ParamVector, b: ParamVector) -> None:
    if a.layout != b.layout:
        raise DimensionError("parameter layouts do not match")


def require_matching(spec: ModelSpec, theta: ParamVector) -> None:
    if theta.layout != spec.layout():
        raise DimensionError("parameter layout does not match the model spec")


@dataclass
class Batch:
    """One minibatch: features and integer class labels."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64).ravel()
        if self.X.ndim != 2:
            raise DimensionError("batch X must be 2-D")
        if self.X.shape[0] != self.y.size:
            raise DimensionError("batch X rows and label count differ")

    @property
    def size(self) -> int:
        return self.X.shape[0]


def he_init(spec: ModelSpec, rng: Rng) -> ParamVector:
    """Gaussian weights with variance 2/fan_in, zero biases."""
    theta = ParamVector.zeros(spec)
    for w, b in theta.views():
        fan_in = w.shape[0]
        w[...] = rng.normals(w.size).reshape(w.shape) * np.sqrt(2.0 / fan_in)
        b[...] = 0.0
    return theta


def _forward_trace(spec, theta, X):
    """Returns (activations, preacts, logits); activations[0] is X."""
    acts = [X]
    zs = []
    a = X
    pairs = theta.views()
    last = spec.num_layers - 1
    for l, (w, b) in enumerate(pairs):
        z = a @ w + b
        zs.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return acts, zs, zs[-1]


def forward(spec: ModelSpec, theta: ParamVector, X: np.ndarray) -> np.ndarray:
    """Logits of shape (batch, num_classes)."""
    require_matching(spec, theta)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionError(f"input shape {X.shape} does not match input_dim {spec.input_dim}")
    _, _, logits = _forward_trace(spec, theta, X)
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _mean_cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(y.size), y]
    return float(np.mean(lse - picked))


def loss_value(spec, theta, batch, weight_decay, data_weight=1.0) -> float:
    logits = forward(spec, theta, batch.X)
    reg = weight_decay * float(theta.values @ theta.values)
    return data_weight * _mean_cross_entropy(logits, batch.y) + reg


def loss_grad(
    spec: ModelSpec,
    theta: ParamVector,
    batch: Batch,
    weight_decay: float,
    data_weight: float = 1.0,
) -> tuple[float, ParamVector]:
    """Regularized cross-entropy loss and its exact gradient."""
    if batch.size == 0:
        raise ParameterError("empty batch")
    if weight_decay < 0:
        raise ParameterError("weight_decay must be >= 0")
    require_matching(spec, theta)
    if batch.X.shape[1] != spec.input_dim:
        raise DimensionError("batch feature dimension does not match the model spec")

    acts, zs, logits = _forward_trace(spec, theta, batch.X)
    n = batch.size
    loss = data_weight * _mean_cross_entropy(logits, batch.y)
    loss += weight_decay * float(theta.values @ theta.values)

    grad = ParamVector.zeros(spec)
    gpairs = grad.views()
    wpairs = theta.views()

    p = softmax(logits)
    p[np.arange(n), batch.y] -= 1.0
    g = p / n
    for l in range(spec.num_layers - 1, -1, -1):
        gw, gb = gpairs[l]
        gw[...] = acts[l].T @ g
        gb[...] = g.sum(axis=0)
        if l > 0:
            g = (g @ wpairs[l][0].T) * (zs[l - 1] > 0.0)

    grad.values *= data_weight
    grad.values += (2.0 * weight_decay) * theta.values
    return loss, grad


def hvp(
    spec: ModelSpec,
    theta: ParamVector,
    batch: Batch,
    weight_decay: float,
    v: ParamVector,
    data_weight: float = 1.0,
) -> ParamVector:
    """Hessian-vector product by forward-over-reverse differentiation."""
    if batch.size == 0:
        raise ParameterError("empty batch")
    require_matching(spec, theta)
    require_same_layout(theta, v)

    acts, zs, logits = _forward_trace(spec, theta, batch.X)
    n = batch.size
    wpairs = theta.views()
    vpairs = v.views()
    last = spec.num_layers - 1

    # Tangents of activations pushed forward alongside the cached primals.
    r_acts = [np.zeros_like(batch.X)]
    ra = r_acts[0]
    rz_last = None
    for l, ((w, b), (vw, vb)) in enumerate(zip(wpairs, vpairs)):
        rz = ra @ w + acts[l] @ vw + vb
        if l < last:
            ra = rz * (zs[l] > 0.0)
            r_acts.append(ra)
        else:
            rz_last = rz

    p = softmax(logits)
    rp = p * (rz_last - (p * rz_last).sum(axis=1, keepdims=True))
    rg = rp / n
    p[np.arange(n), batch.y] -= 1.0
    g = p / n

    out = ParamVector.zeros(spec)
    opairs = out.views()
    for l in range(last, -1, -1):
        hw, hb = opairs[l]
        hw[...] = r_acts[l].T @ g + acts[l].T @ rg
        hb[...] = rg.sum(axis=0)
        if l > 0:
            mask = zs[l - 1] > 0.0
            rg = (rg @ wpairs[l][0].T + g @ vpairs[l][0].T) * mask
            g = (g @ wpairs[l][0].T) * mask

    out.values *= data_weight
    out.values += (2.0 * weight_decay) * v.values
    return out


def exact_hessian(
    spec: ModelSpec,
    theta: ParamVector,
    batch: Batch,
    weight_decay: float,
    data_weight: float = 1.0,
    max_params: int = 2000,
) -> np.ndarray:
    """Dense Hessian assembled column-by-column from basis-vector HVPs.

    Test oracle for the iterative curvature estimators; guarded so it is
    never called on more than ``max_params`` parameters.
    """
    p = spec.param_count
    if p > max_params:
        raise ParameterError(f"exact_hessian guard: {p} parameters exceeds {max_params}")
    h = np.empty((p, p), dtype=np.float64)
    basis = ParamVector.zeros(spec)
    for j in range(p):
        basis.values[:] = 0.0
        basis.values[j] = 1.0
        h[:, j] = hvp(spec, theta, batch, weight_decay, basis, data_weight).values
    return h
