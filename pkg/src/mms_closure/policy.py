"""Convolutional actor-critic with hand-written backpropagation.

Six dilated, circularly padded convolutions with ReLU form a shared backbone.
A policy head emits per-cell Gaussian means and log standard deviations, a
value head emits one value per cell. 1D problems use 1D convolutions and 2D
problems 2D convolutions; kernel size is always 3 and padding equals the
dilation, so the spatial size is preserved.

Public arrays are channel-first ``(batch, channels, *space)``; internally
activations are kept channel-last so each kernel tap is one matrix product.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .env import ACTION_CHANNELS, OBS_CHANNELS

BACKBONE_DILATIONS = (1, 2, 3, 4, 3, 2)
WIDTH = 64
KERNEL = 3
LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
POLICY_INIT_SCALE = 1e-2
LOG_STD_INIT = -1.0

KIND_TAGS = {"burgers1d": 0, "burgers2d": 1, "advection2d": 2}
KIND_NDIM = {"burgers1d": 1, "burgers2d": 2, "advection2d": 2}
MAGIC = b"MMSC"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out, in, 3) or (out, in, 3, 3)
    bias: np.ndarray  # (out,)
    dilation: int = 1

    @property
    def ndim(self) -> int:
        return self.weight.ndim - 2

    def taps(self):
        """Yield (kernel index, spatial offset) pairs."""
        for idx in product(range(KERNEL), repeat=self.ndim):
            yield idx, tuple((j - 1) * self.dilation for j in idx)


@dataclass
class NetworkParams:
    """Backbone layers followed by the policy head and the value head."""

    kind: str
    layers: list[ConvLayer]

    @property
    def backbone(self) -> list[ConvLayer]:
        return self.layers[:-2]

    @property
    def policy_head(self) -> ConvLayer:
        return self.layers[-2]

    @property
    def value_head(self) -> ConvLayer:
        return self.layers[-1]

    @property
    def ndim(self) -> int:
        return self.layers[0].ndim

    @property
    def in_channels(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def action_channels(self) -> int:
        return self.policy_head.weight.shape[0] // 2

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> NetworkParams:
        return NetworkParams(
            self.kind,
            [ConvLayer(l.weight.copy(), l.bias.copy(), l.dilation) for l in self.layers],
        )

    def num_parameters(self) -> int:
        return sum(a.size for a in self.arrays())


def _he_uniform(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    rng: np.random.Generator,
    kind: str,
    width: int = WIDTH,
    dilations=BACKBONE_DILATIONS,
    in_channels: int | None = None,
    action_channels: int | None = None,
    ndim: int | None = None,
) -> NetworkParams:
    """He-uniform initialization; the policy head starts small with log-std -1.

    The keyword overrides exist for toy networks (gradient checks, bandits).
    """
    in_ch = OBS_CHANNELS[kind] if in_channels is None else in_channels
    n_act = ACTION_CHANNELS[kind] if action_channels is None else action_channels
    nd = KIND_NDIM[kind] if ndim is None else ndim
    k = (KERNEL,) * nd
    layers = []
    prev = in_ch
    for d in dilations:
        layers.append(ConvLayer(_he_uniform(rng, (width, prev, *k)), np.zeros(width), d))
        prev = width
    policy_w = _he_uniform(rng, (2 * n_act, prev, *k)) * POLICY_INIT_SCALE
    policy_b = np.concatenate([np.zeros(n_act), np.full(n_act, LOG_STD_INIT)])
    layers.append(ConvLayer(policy_w, policy_b, 1))
    layers.append(ConvLayer(_he_uniform(rng, (1, prev, *k)), np.zeros(1), 1))
    return NetworkParams(kind, layers)


def _shift(x: np.ndarray, offset: tuple[int, ...]) -> np.ndarray:
    """out[b, i, ..., c] = x[b, i + offset, ..., c] with periodic wrap."""
    if not any(offset):
        return x
    axes = tuple(range(1, 1 + len(offset)))
    return np.roll(x, tuple(-o for o in offset), axis=axes)


def _unshift(x: np.ndarray, offset: tuple[int, ...]) -> np.ndarray:
    if not any(offset):
        return x
    axes = tuple(range(1, 1 + len(offset)))
    return np.roll(x, offset, axis=axes)


def conv_forward(layer: ConvLayer, x: np.ndarray) -> np.ndarray:
    """Circular cross-correlation; ``x`` is channel-last (B, *space, C_in)."""
    out = np.broadcast_to(layer.bias, x.shape[:-1] + layer.bias.shape).copy()
    for idx, off in layer.taps():
        w = layer.weight[(slice(None), slice(None)) + idx]  # (out, in)
        out += _shift(x, off) @ np.ascontiguousarray(w.T)
    return out


def conv_backward(layer: ConvLayer, x: np.ndarray, dy: np.ndarray, need_dx: bool = True):
    """Return (dx, dweight, dbias) for ``y = conv_forward(layer, x)``."""
    c_in = x.shape[-1]
    c_out = dy.shape[-1]
    dy_flat = dy.reshape(-1, c_out)
    dw = np.zeros_like(layer.weight)
    dx = np.zeros_like(x) if need_dx else None
    for idx, off in layer.taps():
        xs = _shift(x, off).reshape(-1, c_in)
        dw[(slice(None), slice(None)) + idx] = dy_flat.T @ xs
        if need_dx:
            w = np.ascontiguousarray(layer.weight[(slice(None), slice(None)) + idx])
            dx += _unshift(dy @ w, off)
    db = dy_flat.sum(axis=0)
    return dx, dw, db


@dataclass
class PolicyOutput:
    """Batched diagonal Gaussian over per-cell actions; channel axis is 1."""

    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # channel-last input of each layer
    raw_log_std: np.ndarray | None = None
    squeeze: bool = False


def _to_last(a: np.ndarray) -> np.ndarray:
    return np.moveaxis(a, 1, -1)


def _to_first(a: np.ndarray) -> np.ndarray:
    return np.moveaxis(a, -1, 1)


def forward(params: NetworkParams, obs: np.ndarray, keep_cache: bool = False):
    """Evaluate the network on observations ``(B, C, *space)`` or ``(C, *space)``.

    Returns ``(PolicyOutput, value)`` with ``value`` of shape ``(B, *space)``,
    plus a cache for :func:`backward` when ``keep_cache`` is set.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == params.ndim + 1:
        obs = obs[None]
    if obs.ndim != params.ndim + 2:
        raise ValueError(f"observation rank {obs.ndim} does not fit a {params.ndim}D network")
    if obs.shape[1] != params.in_channels:
        raise ValueError(f"expected {params.in_channels} observation channels, got {obs.shape[1]}")

    cache = ForwardCache()
    h = np.ascontiguousarray(_to_last(obs))
    for layer in params.backbone:
        if keep_cache:
            cache.inputs.append(h)
        h = np.maximum(conv_forward(layer, h), 0.0)
    if keep_cache:
        cache.inputs.append(h)
    p = conv_forward(params.policy_head, h)
    v = conv_forward(params.value_head, h)
    m = params.action_channels
    raw = p[..., m:]
    cache.raw_log_std = raw
    out = PolicyOutput(_to_first(p[..., :m]), _to_first(np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)))
    value = v[..., 0]
    if keep_cache:
        return out, value, cache
    return out, value


def backward(params: NetworkParams, cache: ForwardCache, d_mean, d_log_std, d_value) -> list[np.ndarray]:
    """Gradients of a scalar loss given its gradients w.r.t. the network outputs.

    The returned list is aligned with ``params.arrays()``. Gradients through the
    log-std clamp are zero where the clamp is active.
    """
    raw = cache.raw_log_std
    inside = (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)
    dp = np.concatenate([_to_last(d_mean), _to_last(d_log_std) * inside], axis=-1)
    dv = np.asarray(d_value)[..., None]

    h = cache.inputs[-1]
    grads: list = [None] * (2 * len(params.layers))
    dh_p, dw, db = conv_backward(params.policy_head, h, dp)
    grads[-4], grads[-3] = dw, db
    dh_v, dw, db = conv_backward(params.value_head, h, dv)
    grads[-2], grads[-1] = dw, db
    dh = dh_p + dh_v

    for i in range(len(params.backbone) - 1, -1, -1):
        layer = params.backbone[i]
        dh = dh * (cache.inputs[i + 1] > 0)
        dh, dw, db = conv_backward(layer, cache.inputs[i], dh, need_dx=i > 0)
        grads[2 * i], grads[2 * i + 1] = dw, db
    return grads


HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def log_prob_and_entropy(out: PolicyOutput, action: np.ndarray):
    """Per-cell log-density and entropy, summed over action channels."""
    z = (action - out.mean) / out.std
    log_prob = np.sum(-0.5 * z * z - out.log_std - HALF_LOG_2PI, axis=1)
    entropy = np.sum(0.5 + HALF_LOG_2PI + out.log_std, axis=1)
    return log_prob, entropy


def sample_action(out: PolicyOutput, rng: np.random.Generator):
    """Draw independent per-cell actions; returns (action, per-cell log-prob)."""
    action = out.mean + out.std * rng.standard_normal(out.mean.shape)
    return action, log_prob_and_entropy(out, action)[0]


def save_checkpoint(params: NetworkParams, path: str | Path) -> None:
    """Little-endian binary: magic, version, kind tag, layer count, layers.

    Each layer stores its weight rank, weight dims and dilation as u32, then
    the weights and the bias as float64.
    """
    buf = bytearray(MAGIC)
    buf += struct.pack("<III", FORMAT_VERSION, KIND_TAGS[params.kind], len(params.layers))
    for layer in params.layers:
        w = layer.weight
        buf += struct.pack("<I", w.ndim)
        buf += struct.pack(f"<{w.ndim}I", *w.shape)
        buf += struct.pack("<I", layer.dilation)
        buf += w.astype("<f8").tobytes()
        buf += layer.bias.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path, kind: str | None = None) -> NetworkParams:
    """Read a checkpoint; with ``kind`` given, reject one saved for another PDE."""
    data = Path(path).read_bytes()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError("checkpoint is truncated")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    def take_floats(count):
        nonlocal pos
        size = 8 * count
        if pos + size > len(data):
            raise CheckpointError("checkpoint is truncated")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos += size
        return arr

    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    pos = 4
    version, tag, n_layers = take("<III")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tags = {v: k for k, v in KIND_TAGS.items()}
    if tag not in tags:
        raise CheckpointError(f"unknown PDE tag {tag}")
    saved_kind = tags[tag]
    if kind is not None and kind != saved_kind:
        raise CheckpointError(f"checkpoint was trained for {saved_kind}, not {kind}")
    layers = []
    for _ in range(n_layers):
        (rank,) = take("<I")
        if rank not in (3, 4):
            raise CheckpointError(f"bad weight rank {rank}")
        shape = take(f"<{rank}I")
        (dilation,) = take("<I")
        w = take_floats(int(np.prod(shape))).reshape(shape)
        b = take_floats(shape[0])
        layers.append(ConvLayer(w, b, dilation))
    if pos != len(data):
        raise CheckpointError("trailing bytes after the last layer")
    return NetworkParams(saved_kind, layers)
