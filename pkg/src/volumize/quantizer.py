"""Weight quantization onto the volumization walls, plus distribution
diagnostics and a packed on-disk format.

Training with walls at +-V piles weight mass onto the walls, which is what
makes post-hoc rounding to {-V, V} (binary) or {-V, 0, V} (ternary) cheap in
accuracy. quantized_training() applies the rounding every period_epochs
during training and keeps going from the rounded network; optimizer state is
carried across rounding events unchanged.

Packed format (little-endian throughout), magic b"VZQW", version byte 0x01:

    magic[4] version[1] mode[1] n_tensors[u32]
    per tensor:
        name_len[u16] name[utf-8] ndim[u8] dims[u32 each]
        V[f64] codes[packed bits, little-endian bit order, byte-padded]
    crc32[u32]   over everything after the magic

Binary packs 1 bit/weight (1 -> +V, 0 -> -V); ternary packs 2 bits/weight
(0b00 -> 0, 0b01 -> +V, 0b10 -> -V; 0b11 is invalid and rejected at load).
"""

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError, DomainError

MODES = ("binary", "ternary")

_MAGIC = b"VZQW"
_VERSION = 1
_MODE_CODES = {"binary": 1, "ternary": 2}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


@dataclass(frozen=True)
class QuantizationScheme:
    mode: str = "ternary"
    period_epochs: int = 2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.period_epochs < 1:
            raise ConfigError(
                f"period_epochs must be >= 1, got {self.period_epochs}"
            )


def quantize(w, vol: float, mode: str):
    """Round an array onto the walls.

    binary:  w >= 0 -> +V, else -V.
    ternary: w > V/2 -> +V; w < -V/2 -> -V; the closed middle band -> 0.

    Idempotent, and the output lands exactly in {-V, V} / {-V, 0, V}.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if not vol > 0:
        raise DomainError(f"vol must be positive, got {vol}")
    w = np.asarray(w, dtype=np.float64)
    if mode == "binary":
        return np.where(w >= 0.0, vol, -vol)
    half = vol / 2.0
    return np.where(w > half, vol, np.where(w < -half, -vol, 0.0))


def quantize_network(net, vols, mode: str) -> None:
    """Round every parameter tensor (biases included) in place onto its
    layer's walls."""
    by_name = {lv.tensor: lv.vol for lv in vols}
    for name, t in net.param_tensors():
        if name not in by_name:
            raise ConfigError(f"no volume entry for tensor {name!r}")
        t[...] = quantize(t, by_name[name], mode)


@dataclass(eq=False)
class WeightHistogram:
    """Per-layer weight distribution with the walls statistic.

    mass_near_walls is the fraction of the layer's parameters within
    delta*V of either wall (|abs(w) - V| <= delta*V); NaN when no walls
    were supplied.
    """

    layer: int
    bin_edges: np.ndarray
    counts: np.ndarray
    mass_near_walls: float
    vol: float


def mass_near_walls(values, vol: float, delta: float = 0.05) -> float:
    if not vol > 0:
        raise DomainError(f"vol must be positive, got {vol}")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must be in (0, 1), got {delta}")
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        return 0.0
    return float((np.abs(np.abs(v) - vol) <= delta * vol).mean())


def weight_histogram(net, vols=None, bins: int = 64, delta: float = 0.05):
    """One histogram per layer over [-max|w|, max|w|], weights and biases
    pooled (they share the layer's walls)."""
    if bins < 3:
        raise ConfigError(f"bins must be >= 3, got {bins}")
    by_name = {lv.tensor: lv.vol for lv in vols} if vols is not None else {}
    out = []
    for i, layer in enumerate(net.layers):
        vals = np.concatenate([layer.w.ravel(), layer.b.ravel()])
        m = float(np.abs(vals).max()) if vals.size else 0.0
        if m == 0.0:
            m = 1.0
        counts, edges = np.histogram(vals, bins=bins, range=(-m, m))
        vol = by_name.get(f"layer{i}.weight", float("nan"))
        if np.isfinite(vol) and vol > 0:
            mass = mass_near_walls(vals, vol, delta)
        else:
            mass = float("nan")
        out.append(WeightHistogram(layer=i, bin_edges=edges, counts=counts,
                                   mass_near_walls=mass, vol=vol))
    return out


@dataclass(eq=False)
class QuantizedTrainingResult:
    trajectory: "object"
    float_net: "object"
    quantized_net: "object"
    quantize_epochs: list = field(default_factory=list)


def quantized_training(net, data, opt_spec, vol_cfg, scheme: QuantizationScheme,
                       rng, epochs: int = 100, batch_size: int = 128):
    """Volumized training with periodic in-place rounding onto the walls.

    Every scheme.period_epochs, at the end of an epoch that still has
    training ahead of it, all parameters are rounded in place and training
    simply continues (optimizer moments are kept). The final epoch never
    rounds: the returned float_net is the net as trained, quantized_net is
    its rounded copy.
    """
    from .training import train_model
    from .volumization import derive_layer_volumes

    if not vol_cfg.enabled or not vol_cfg.v > 0:
        raise ConfigError("quantized training requires active walls "
                          "(0 < v < inf and alpha < 1)")
    vols = derive_layer_volumes(net, vol_cfg)
    events = []

    def hook(net_, state_, epoch: int) -> None:
        if epoch % scheme.period_epochs == 0 and epoch < epochs:
            quantize_network(net_, vols, scheme.mode)
            events.append(epoch)

    traj = train_model(net, data, opt_spec, vol_cfg, rng, epochs=epochs,
                       batch_size=batch_size, epoch_hook=hook)
    float_net = net.clone()
    quantized = net.clone()
    quantize_network(quantized, vols, scheme.mode)
    return QuantizedTrainingResult(trajectory=traj, float_net=float_net,
                                   quantized_net=quantized,
                                   quantize_epochs=events)


# --- packed on-disk format ---------------------------------------------

def _encode_codes(values, vol: float, mode: str) -> bytes:
    q = quantize(values, vol, mode).ravel()
    if mode == "binary":
        bits = (q > 0).astype(np.uint8)
        return np.packbits(bits, bitorder="little").tobytes()
    codes = np.zeros(q.size, dtype=np.uint8)
    codes[q > 0] = 0b01
    codes[q < 0] = 0b10
    n_bytes = (q.size + 3) // 4
    packed = np.zeros(n_bytes, dtype=np.uint8)
    idx = np.arange(q.size)
    np.bitwise_or.at(packed, idx // 4, codes << (2 * (idx % 4)).astype(np.uint8))
    return packed.tobytes()


def _decode_codes(raw: bytes, n: int, vol: float, mode: str) -> np.ndarray:
    if mode == "binary":
        need = (n + 7) // 8
        if len(raw) != need:
            raise CheckpointError("integrity: code payload length mismatch")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8),
                             bitorder="little")[:n]
        return np.where(bits == 1, vol, -vol)
    need = (n + 3) // 4
    if len(raw) != need:
        raise CheckpointError("integrity: code payload length mismatch")
    packed = np.frombuffer(raw, dtype=np.uint8)
    idx = np.arange(n)
    codes = (packed[idx // 4] >> (2 * (idx % 4)).astype(np.uint8)) & 0b11
    if (codes == 0b11).any():
        raise CheckpointError("integrity: invalid ternary code 0b11")
    out = np.zeros(n, dtype=np.float64)
    out[codes == 0b01] = vol
    out[codes == 0b10] = -vol
    return out


def save_quantized_weights(path, named_tensors, vols, mode: str) -> None:
    """Write tensors in the packed wall-code format (rounding them first;
    a no-op for already-rounded tensors)."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    by_name = {lv.tensor: lv.vol for lv in vols}
    body = bytearray()
    body.append(_VERSION)
    body.append(_MODE_CODES[mode])
    tensors = list(named_tensors)
    body += struct.pack("<I", len(tensors))
    for name, t in tensors:
        if name not in by_name:
            raise ConfigError(f"no volume entry for tensor {name!r}")
        vol = by_name[name]
        if not vol > 0:
            raise DomainError(f"vol for {name!r} must be positive, got {vol}")
        t = np.asarray(t, dtype=np.float64)
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb))
        body += nb
        body += struct.pack("<B", t.ndim)
        for d in t.shape:
            body += struct.pack("<I", d)
        body += struct.pack("<d", vol)
        body += _encode_codes(t, vol, mode)
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(bytes(body))


def load_quantized_weights(path):
    """Read a packed file back; returns (mode, [(name, array), ...]) with
    values exactly in the mode's codomain."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(_MAGIC) + 7 or blob[:4] != _MAGIC:
        raise CheckpointError("integrity: not a quantized-weights file")
    body, tail = blob[4:-4], blob[-4:]
    (crc,) = struct.unpack("<I", tail)
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("integrity: checksum mismatch")
    version = body[0]
    if version != _VERSION:
        raise CheckpointError(f"version: unsupported format version {version}")
    mode_code = body[1]
    if mode_code not in _MODE_NAMES:
        raise CheckpointError(f"integrity: unknown mode byte {mode_code}")
    mode = _MODE_NAMES[mode_code]
    off = 2
    try:
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        out = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + nlen].decode("utf-8")
            if len(name.encode("utf-8")) != nlen:
                raise CheckpointError("integrity: truncated tensor name")
            off += nlen
            (ndim,) = struct.unpack_from("<B", body, off)
            off += 1
            dims = []
            for _ in range(ndim):
                (d,) = struct.unpack_from("<I", body, off)
                off += 4
                dims.append(d)
            (vol,) = struct.unpack_from("<d", body, off)
            off += 8
            n = 1
            for d in dims:
                n *= d
            nbytes = (n + 7) // 8 if mode == "binary" else (n + 3) // 4
            raw = body[off:off + nbytes]
            if len(raw) != nbytes:
                raise CheckpointError("integrity: truncated code payload")
            off += nbytes
            out.append((name, _decode_codes(raw, n, vol, mode).reshape(dims)))
        if off != len(body):
            raise CheckpointError("integrity: trailing bytes after payload")
    except struct.error as exc:
        raise CheckpointError(f"integrity: truncated file ({exc})") from exc
    return mode, out
