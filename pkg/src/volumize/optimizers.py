"""Volumized first-order optimizers: sgd, adam, laprop.

Update rules (per tensor, elementwise; t counts steps from 1):

    sgd     m = mu*m + g                w -= lr*m
    adam    n = nu*n + (1-nu)*g^2       m = mu*m + (1-mu)*g
            w -= lr * (m/c_m) / (sqrt(n/c_n) + eps)
    laprop  n = nu*n + (1-nu)*g^2       m = mu*m + (1-mu) * g/(sqrt(n/c_n)+eps)
            w -= lr * m/c_m

with bias corrections c_m = 1-mu^t, c_n = 1-nu^t (both 1 when
bias_correction is off; sgd never bias-corrects). Note sgd deliberately
accumulates raw gradients (no (1-mu) factor).

The wall transform runs after the full optimizer update of every tensor in
the step, scaling first moments alongside weights; second moments are never
touched by it.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, ShapeError
from .volumization import apply_volumization

KINDS = ("sgd", "adam", "laprop")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "adam"
    lr: float = 1e-4
    mu: float = 0.9
    nu: float = 0.999
    eps: float = 1e-8
    bias_correction: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.mu < 1.0:
            raise ConfigError(f"mu must lie in [0, 1), got {self.mu}")
        if not 0.0 <= self.nu < 1.0:
            raise ConfigError(f"nu must lie in [0, 1), got {self.nu}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")


class OptimizerState:
    """First/second moment buffers mirroring net.param_tensors(), plus the
    step counter. Buffers are plain arrays so checkpoints can serialize
    them byte-exactly.
    """

    def __init__(self, m, n, t: int = 0):
        self.m = m
        self.n = n  # None for sgd
        self.t = t

    @classmethod
    def init_for(cls, net, spec: OptimizerSpec) -> "OptimizerState":
        m = [np.zeros_like(t) for _, t in net.param_tensors()]
        n = None if spec.kind == "sgd" else [np.zeros_like(t) for _, t in net.param_tensors()]
        return cls(m, n, 0)


def step(net, grads, state: OptimizerState, spec: OptimizerSpec,
         vols=None, alpha: float = 1.0, overshoot_policy: str = "leave") -> None:
    """One optimizer step over all tensors, then the wall transform.

    Mutates net parameters and state in place. ``grads`` is a
    GradientBundle (or anything with a .grads list aligned to
    net.param_tensors()). vols=None skips the transform entirely.
    """
    tensors = net.param_tensors()
    gs = grads.grads
    if len(gs) != len(tensors):
        raise ShapeError(f"got {len(gs)} gradients for {len(tensors)} tensors")
    for (name, w), g in zip(tensors, gs):
        if g.shape != w.shape:
            raise ShapeError(f"gradient shape {g.shape} != {name} shape {w.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")

    state.t += 1
    if spec.kind != "sgd" and spec.bias_correction:
        cm = 1.0 - spec.mu ** state.t
        cn = 1.0 - spec.nu ** state.t
    else:
        cm = 1.0
        cn = 1.0

    for i, ((name, w), g) in enumerate(zip(tensors, gs)):
        wf = w.reshape(-1)
        gf = np.ascontiguousarray(g, dtype=np.float64).reshape(-1)
        mf = state.m[i].reshape(-1)
        if spec.kind == "sgd":
            _kernels.sgd_update(wf, gf, mf, spec.lr, spec.mu)
        elif spec.kind == "adam":
            _kernels.adam_update(wf, gf, mf, state.n[i].reshape(-1),
                                 spec.lr, spec.mu, spec.nu, spec.eps, cm, cn)
        else:
            _kernels.laprop_update(wf, gf, mf, state.n[i].reshape(-1),
                                   spec.lr, spec.mu, spec.nu, spec.eps, cm, cn)

    if vols is not None:
        apply_volumization(net, state, vols, alpha, overshoot_policy)
