"""Small dense feed-forward networks with hand-rolled backprop.

Weights are stored (in_dim, out_dim) so a batch flows as x @ W + b; all
matrix products go through the deterministic kernels, which keeps whole
training trajectories reproducible bit for bit. Activations are computed
with numpy ufuncs in both backends (they are cheap and not order-sensitive).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, ShapeError
from .linalg import SeededRng, as_matrix, he_uniform_init

ACTIVATIONS = ("identity", "relu", "tanh")
LOSSES = ("mse", "softmax_xent")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "identity"
    has_bias: bool = True

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ConfigError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}"
            )


class Layer:
    __slots__ = ("spec", "w", "b", "init_scale_a")

    def __init__(self, spec: LayerSpec, w, b, init_scale_a: float):
        self.spec = spec
        self.w = w
        self.b = b
        self.init_scale_a = init_scale_a


class Network:
    """A stack of affine layers; parameter arrays are mutated in place by
    the optimizer, so identity is meaningful and clone() exists for tests.
    """

    def __init__(self, layers, fan_mode: str):
        self.layers = layers
        self.fan_mode = fan_mode

    @property
    def in_dim(self) -> int:
        return self.layers[0].spec.in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].spec.out_dim

    def param_tensors(self):
        """Stable (name, array) enumeration: layerK.weight, layerK.bias."""
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"layer{i}.weight", layer.w))
            if layer.b is not None:
                out.append((f"layer{i}.bias", layer.b))
        return out

    @property
    def n_params(self) -> int:
        return sum(t.size for _, t in self.param_tensors())

    def clone(self) -> "Network":
        layers = [
            Layer(l.spec, l.w.copy(), None if l.b is None else l.b.copy(), l.init_scale_a)
            for l in self.layers
        ]
        return Network(layers, self.fan_mode)


def init_network(specs, rng: SeededRng, fan_mode: str = "fan_in") -> Network:
    """He-uniform weights, zero biases; records a = sqrt(6/fan) per layer."""
    if fan_mode not in ("fan_in", "fan_out"):
        raise ConfigError(f"fan_mode must be fan_in or fan_out, got {fan_mode!r}")
    if not specs:
        raise ConfigError("need at least one layer")
    for prev, nxt in zip(specs, specs[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ConfigError(
                f"layer chain broken: out_dim {prev.out_dim} feeds in_dim {nxt.in_dim}"
            )
    layers = []
    for spec in specs:
        fan = spec.in_dim if fan_mode == "fan_in" else spec.out_dim
        w, a = he_uniform_init(rng, spec.in_dim, spec.out_dim, fan)
        b = np.zeros(spec.out_dim) if spec.has_bias else None
        layers.append(Layer(spec, w, b, a))
    return Network(layers, fan_mode)


def _activate(z, kind: str):
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _forward_cached(net: Network, x):
    """Returns (output, per-layer (input, pre-activation, activation))."""
    h = x
    cache = []
    for layer in net.layers:
        z = _kernels.matmul_nn(h, layer.w)
        if layer.b is not None:
            z += layer.b
        a = _activate(z, layer.spec.activation)
        cache.append((h, z, a))
        h = a
    return h, cache


def forward(net: Network, x):
    """Batched forward pass; x is (batch, in_dim)."""
    x = as_matrix(x, "x")
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"input dim {x.shape[1]} != network in_dim {net.in_dim}")
    y, _ = _forward_cached(net, x)
    return y


@dataclass
class GradientBundle:
    loss: float
    grads: list  # aligned with net.param_tensors()


def _loss_and_output_grad(y, target, loss: str, n: int):
    if loss == "mse":
        t = as_matrix(target, "target")
        if t.shape != y.shape:
            raise ShapeError(f"target shape {t.shape} != output shape {y.shape}")
        r = y - t
        value = float((r * r).sum()) / (2.0 * n)
        return value, r / n
    # softmax cross-entropy; target is class indices or one-hot rows
    t = np.asarray(target)
    if t.ndim == 1:
        if not np.issubdtype(t.dtype, np.integer):
            raise ShapeError("class-index target must be an integer vector")
        if t.shape[0] != y.shape[0]:
            raise ShapeError(f"{t.shape[0]} targets for batch of {y.shape[0]}")
        if t.min() < 0 or t.max() >= y.shape[1]:
            raise ShapeError("class index out of range")
        p = np.zeros_like(y)
        p[np.arange(y.shape[0]), t] = 1.0
    else:
        p = as_matrix(t, "target")
        if p.shape != y.shape:
            raise ShapeError(f"target shape {p.shape} != output shape {y.shape}")
    zshift = y - y.max(axis=1, keepdims=True)
    ez = np.exp(zshift)
    denom = ez.sum(axis=1, keepdims=True)
    log_softmax = zshift - np.log(denom)
    value = float(-(p * log_softmax).sum()) / n
    return value, (ez / denom - p) / n


def loss_and_grad(net: Network, x, target, loss: str = "mse") -> GradientBundle:
    """Loss and exact backprop gradients for every parameter tensor.

    mse is the half-mean-squared form: sum of squared residual entries over
    2*batch. Raises NumericError if any activation, the loss, or a gradient
    comes out non-finite.
    """
    if loss not in LOSSES:
        raise ConfigError(f"loss must be one of {LOSSES}, got {loss!r}")
    x = as_matrix(x, "x")
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"input dim {x.shape[1]} != network in_dim {net.in_dim}")
    n = x.shape[0]
    if n == 0:
        raise ShapeError("empty batch")
    y, cache = _forward_cached(net, x)
    for i, (_, _, act) in enumerate(cache):
        if not np.isfinite(act).all():
            raise NumericError(f"non-finite activations in layer{i}")
    value, delta = _loss_and_output_grad(y, target, loss, n)
    if not np.isfinite(value):
        raise NumericError("non-finite loss")

    grads_rev = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        h_in, z, act = cache[i]
        kind = layer.spec.activation
        if kind == "relu":
            delta = np.where(z > 0.0, delta, 0.0)  # subgradient 0 at the kink
        elif kind == "tanh":
            delta = delta * (1.0 - act * act)
        gw = _kernels.matmul_tn(h_in, delta)
        if layer.b is not None:
            grads_rev.append(_kernels.colsum(delta))
        grads_rev.append(gw)
        if i > 0:
            delta = _kernels.matmul_nt(delta, layer.w)
    grads = grads_rev[::-1]
    for (name, _), g in zip(net.param_tensors(), grads):
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
    return GradientBundle(loss=value, grads=grads)


def empirical_lipschitz(net: Network, rng: SeededRng, n_pairs: int = 10000,
                        radius: float = 1e-3) -> float:
    """Max output/input perturbation ratio over random probe pairs.

    A lower bound on the true Lipschitz constant; probes are gaussian base
    points with radius-length gaussian directions.
    """
    if n_pairs <= 0:
        raise ConfigError(f"n_pairs must be positive, got {n_pairs}")
    if radius <= 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    x = rng.normal((n_pairs, net.in_dim))
    d = rng.normal((n_pairs, net.in_dim))
    norms = np.sqrt((d * d).sum(axis=1, keepdims=True))
    norms[norms == 0.0] = 1.0
    d = d * (radius / norms)
    y1 = forward(net, x)
    y2 = forward(net, x + d)
    num = np.sqrt(((y2 - y1) ** 2).sum(axis=1))
    den = np.sqrt((d * d).sum(axis=1))
    return float((num / den).max())


def accuracy(net: Network, x, y) -> float:
    """Fraction of argmax predictions matching integer labels."""
    pred = np.argmax(forward(net, x), axis=1)
    return float((pred == np.asarray(y)).mean())
