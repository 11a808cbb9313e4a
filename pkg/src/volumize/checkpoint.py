"""Bitwise-faithful training checkpoints.

Layout (little-endian throughout), magic b"VZCK", version byte 0x01:

    magic[4] version[1] header_len[u32] header[utf-8 JSON]
    payload[f64 LE, C order] crc32[u32]

The crc covers everything after the magic. The header describes the model
(layer specs, init scales), the tensor manifest, optimizer spec and step
counter, volumization config, shuffle-stream state, epoch counter, and the
metric history; the payload is the concatenation of all parameter tensors
followed by first-moment buffers and (when present) second-moment buffers,
in manifest order. Every float that must survive the round trip exactly
(hyperparameters, metrics, init scales) is stored as a C99 hex literal, so
load(save(run)) reproduces the run bit for bit and a resumed run's
trajectory is indistinguishable from an uninterrupted one.

Load failures raise CheckpointError with a message starting "version:" for
format-version mismatches and "integrity:" for everything else (bad magic,
truncation, checksum or manifest mismatches).
"""

import json
import struct
import zlib

import numpy as np

from .errors import CheckpointError, ConfigError
from .linalg import SeededRng
from .net import Layer, LayerSpec, Network
from .optimizers import OptimizerSpec, OptimizerState
from .training import MetricTrajectory, TrainingRun
from .volumization import VolumizationConfig, derive_layer_volumes

_MAGIC = b"VZCK"
_VERSION = 1


def _hex(x: float) -> str:
    return float(x).hex()


def _unhex(s: str) -> float:
    return float.fromhex(s)


def _header_for(run: TrainingRun) -> dict:
    net = run.net
    spec = run.opt_spec
    cfg = run.vol_cfg
    return {
        "kind": "training-run",
        "model": {
            "fan_mode": net.fan_mode,
            "layers": [
                {
                    "in_dim": l.spec.in_dim,
                    "out_dim": l.spec.out_dim,
                    "activation": l.spec.activation,
                    "has_bias": l.spec.has_bias,
                    "init_scale_a": _hex(l.init_scale_a),
                }
                for l in net.layers
            ],
        },
        "tensors": [
            {"name": name, "shape": list(t.shape)}
            for name, t in net.param_tensors()
        ],
        "optimizer": {
            "kind": spec.kind,
            "lr": _hex(spec.lr),
            "mu": _hex(spec.mu),
            "nu": _hex(spec.nu),
            "eps": _hex(spec.eps),
            "bias_correction": spec.bias_correction,
            "t": run.opt_state.t,
            "has_n": run.opt_state.n is not None,
        },
        "vol": {
            "v": _hex(cfg.v),
            "alpha": _hex(cfg.alpha),
            "fan_mode": cfg.fan_mode,
            "overshoot_policy": cfg.overshoot_policy,
        },
        "run": {
            "epoch": run.epoch,
            "batch_size": run.batch_size,
            "loss": run.loss,
        },
        "shuffle_rng": run.shuffle_rng.get_state(),
        "trajectory": {
            "train_loss": [_hex(x) for x in run.trajectory.train_loss],
            "train_acc": [_hex(x) for x in run.trajectory.train_acc],
            "test_loss": [_hex(x) for x in run.trajectory.test_loss],
            "test_acc": [_hex(x) for x in run.trajectory.test_acc],
        },
    }


def save_checkpoint(path, run: TrainingRun) -> None:
    derived = (derive_layer_volumes(run.net, run.vol_cfg)
               if run.vol_cfg.enabled else None)
    if run.vols != derived:
        # the header stores only vol_cfg; walls that don't derive from it
        # would come back wrong, so refuse rather than misload later
        raise ConfigError("runs with custom per-tensor walls cannot be checkpointed")
    header = json.dumps(_header_for(run), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    chunks = [t.ravel() for _, t in run.net.param_tensors()]
    chunks += [m.ravel() for m in run.opt_state.m]
    if run.opt_state.n is not None:
        chunks += [n.ravel() for n in run.opt_state.n]
    payload = np.concatenate(chunks) if chunks else np.empty(0)
    body = bytearray()
    body.append(_VERSION)
    body += struct.pack("<I", len(header))
    body += header
    body += payload.astype("<f8", copy=False).tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(bytes(body))


def _take(flat, shape, cursor):
    n = 1
    for d in shape:
        n *= d
    if cursor + n > flat.size:
        raise CheckpointError("integrity: payload shorter than manifest")
    arr = np.ascontiguousarray(flat[cursor:cursor + n].reshape(shape))
    return arr, cursor + n


def load_checkpoint(path) -> TrainingRun:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 13 or blob[:4] != _MAGIC:
        raise CheckpointError("integrity: not a checkpoint file")
    body, tail = blob[4:-4], blob[-4:]
    (crc,) = struct.unpack("<I", tail)
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("integrity: checksum mismatch")
    version = body[0]
    if version != _VERSION:
        raise CheckpointError(f"version: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", body, 1)
    if 5 + hlen > len(body):
        raise CheckpointError("integrity: truncated header")
    try:
        header = json.loads(body[5:5 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"integrity: unreadable header ({exc})") from exc

    raw = body[5 + hlen:]
    if len(raw) % 8:
        raise CheckpointError("integrity: payload length not a multiple of 8")
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)

    try:
        model = header["model"]
        layers = []
        cursor = 0
        tensor_shapes = {t["name"]: t["shape"] for t in header["tensors"]}
        for i, ls in enumerate(model["layers"]):
            spec = LayerSpec(in_dim=ls["in_dim"], out_dim=ls["out_dim"],
                             activation=ls["activation"], has_bias=ls["has_bias"])
            w, cursor = _take(flat, tensor_shapes[f"layer{i}.weight"], cursor)
            b = None
            if spec.has_bias:
                b, cursor = _take(flat, tensor_shapes[f"layer{i}.bias"], cursor)
            layers.append(Layer(spec, w, b, _unhex(ls["init_scale_a"])))
        net = Network(layers, model["fan_mode"])

        o = header["optimizer"]
        opt_spec = OptimizerSpec(kind=o["kind"], lr=_unhex(o["lr"]),
                                 mu=_unhex(o["mu"]), nu=_unhex(o["nu"]),
                                 eps=_unhex(o["eps"]),
                                 bias_correction=o["bias_correction"])
        shapes = [t["shape"] for t in header["tensors"]]
        m = []
        for shape in shapes:
            arr, cursor = _take(flat, shape, cursor)
            m.append(arr)
        n = None
        if o["has_n"]:
            n = []
            for shape in shapes:
                arr, cursor = _take(flat, shape, cursor)
                n.append(arr)
        if cursor != flat.size:
            raise CheckpointError("integrity: payload longer than manifest")
        opt_state = OptimizerState(m, n, o["t"])

        v = header["vol"]
        vol_cfg = VolumizationConfig(v=_unhex(v["v"]), alpha=_unhex(v["alpha"]),
                                     fan_mode=v["fan_mode"],
                                     overshoot_policy=v["overshoot_policy"])
        r = header["run"]
        traj = header["trajectory"]
        trajectory = MetricTrajectory(
            train_loss=[_unhex(x) for x in traj["train_loss"]],
            train_acc=[_unhex(x) for x in traj["train_acc"]],
            test_loss=[_unhex(x) for x in traj["test_loss"]],
            test_acc=[_unhex(x) for x in traj["test_acc"]],
        )
        return TrainingRun(
            net=net, opt_spec=opt_spec, opt_state=opt_state,
            vol_cfg=vol_cfg,
            vols=derive_layer_volumes(net, vol_cfg) if vol_cfg.enabled else None,
            shuffle_rng=SeededRng.from_state(header["shuffle_rng"]),
            batch_size=r["batch_size"], loss=r["loss"],
            epoch=r["epoch"], trajectory=trajectory,
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"integrity: malformed header ({exc})") from exc
