"""Post-step weight transform that pulls out-of-volume weights toward walls.

Each parameter tensor gets a wall position V >= 0 (in absolute units;
``derive_layer_volumes`` maps the user-facing relative knob v through the
layer's init scale a = sqrt(6/fan)), and a pull strength alpha:

    alpha = 1   leave crossed weights alone (identity)
    0 < a < 1   move them part way back to the wall, momentum scaled too
    alpha = 0   hard clip onto the wall
    alpha < 0   reflect them back inside, elastically at alpha = -1
    V = 0       pure multiplicative decay of weights and momentum

The update is computed as alpha*w + (1-alpha)*V*sgn(w), which the exactness
contract requires: with V = 0 it is bitwise alpha*w, with alpha = 0 bitwise
a clip, with alpha = 1 bitwise the identity.

A strongly negative alpha with a small V can reflect a far-out weight past
the opposite wall; overshoot_policy says whether to leave that as-is
("leave", default) or clamp the result into [-V, V] ("clamp").
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, ShapeError

FAN_MODES = ("fan_in", "fan_out")
OVERSHOOT_POLICIES = ("leave", "clamp")


@dataclass(frozen=True)
class VolumizationConfig:
    """User-facing knobs; v is relative to each layer's init scale."""

    v: float = float("inf")
    alpha: float = 1.0
    fan_mode: str = "fan_in"
    overshoot_policy: str = "leave"

    def __post_init__(self):
        if not (self.v >= 0.0):  # catches NaN too
            raise ConfigError(f"v must be >= 0 (inf = off), got {self.v}")
        if not -1.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [-1, 1], got {self.alpha}")
        if self.fan_mode not in FAN_MODES:
            raise ConfigError(f"fan_mode must be one of {FAN_MODES}, got {self.fan_mode!r}")
        if self.overshoot_policy not in OVERSHOOT_POLICIES:
            raise ConfigError(
                f"overshoot_policy must be one of {OVERSHOOT_POLICIES}, "
                f"got {self.overshoot_policy!r}"
            )

    @property
    def enabled(self) -> bool:
        return self.alpha != 1.0 and np.isfinite(self.v)


@dataclass(frozen=True)
class LayerVolume:
    """Absolute wall position for one parameter tensor."""

    tensor: str
    vol: float

    def __post_init__(self):
        if not (self.vol >= 0.0):
            raise DomainError(f"volume must be >= 0, got {self.vol} for {self.tensor}")


def volumize_step(w_hat, m_hat, vol: float, alpha: float, overshoot_policy: str = "leave"):
    """Pure-function form of the transform: returns new (w, m) arrays.

    Only elements with |w_hat| > vol move; their momentum entry is scaled
    by alpha, everything else (including any second-moment state the caller
    holds) is untouched.
    """
    if overshoot_policy not in OVERSHOOT_POLICIES:
        raise ConfigError(f"unknown overshoot_policy {overshoot_policy!r}")
    if not (vol >= 0.0):
        raise DomainError(f"volume must be >= 0, got {vol}")
    if not -1.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [-1, 1], got {alpha}")
    w = np.asarray(w_hat, dtype=np.float64)
    m = np.asarray(m_hat, dtype=np.float64)
    if w.shape != m.shape:
        raise ShapeError(f"weight/momentum shapes differ: {w.shape} vs {m.shape}")
    w = np.ascontiguousarray(w).copy()
    m = np.ascontiguousarray(m).copy()
    _kernels.volumize(w.reshape(-1), m.reshape(-1), float(vol), float(alpha),
                      overshoot_policy == "clamp")
    return w, m


def apply_volumization(net, state, vols, alpha: float, overshoot_policy: str = "leave") -> None:
    """In-place transform over every parameter tensor of a network.

    ``vols`` must align with net.param_tensors(); ``state.m`` rides along
    (optimizer first moments are decayed with their weights).
    """
    tensors = net.param_tensors()
    if len(vols) != len(tensors):
        raise ShapeError(f"got {len(vols)} volumes for {len(tensors)} tensors")
    clamp = overshoot_policy == "clamp"
    if overshoot_policy not in OVERSHOOT_POLICIES:
        raise ConfigError(f"unknown overshoot_policy {overshoot_policy!r}")
    for (name, w), lv, m in zip(tensors, vols, state.m):
        if lv.tensor != name:
            raise ConfigError(f"volume list misaligned: {lv.tensor} vs tensor {name}")
        _kernels.volumize(w.reshape(-1), m.reshape(-1), float(lv.vol), float(alpha), clamp)


def derive_layer_volumes(net, cfg: VolumizationConfig):
    """Per-tensor absolute walls V = cfg.v * a(layer), biases included.

    The network records which fan convention its init scales were computed
    under; asking for volumes under the other convention is a config error
    rather than a silent rescale.
    """
    if cfg.fan_mode != net.fan_mode:
        raise ConfigError(
            f"config fan_mode {cfg.fan_mode!r} does not match network "
            f"init fan_mode {net.fan_mode!r}"
        )
    vols = []
    for name, _ in net.param_tensors():
        layer = net.layers[int(name.split(".")[0].removeprefix("layer"))]
        vols.append(LayerVolume(tensor=name, vol=cfg.v * layer.init_scale_a))
    return vols
