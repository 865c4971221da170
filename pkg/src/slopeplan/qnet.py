"""Convolutional Q-network in numpy: forward pass, TD targets, MSE loss, backprop.

Layout: two stride-2 valid 3x3 convolutions with ReLU (no pooling), then
three fully connected layers with ReLU on the first two and a linear output
of one Q-value per action.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .moves import N_ACTIONS

CHECKPOINT_MAGIC = b"SPQN"
CHECKPOINT_VERSION = 1


class DivergenceError(FloatingPointError):
    """A gradient or loss became non-finite."""


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_channels: int = 3
    input_height: int = 50
    input_width: int = 50
    conv_channels: tuple = (8, 16)
    kernel: int = 3
    stride: int = 2
    padding: int = 0
    fc_widths: tuple = (512, 256)
    n_actions: int = N_ACTIONS

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "fc_widths", tuple(int(c) for c in self.fc_widths))
        if self.padding != 0:
            raise ValueError("only valid (unpadded) convolutions are supported")
        h, w = self.conv_output_hw()
        if h < 1 or w < 1:
            raise ValueError(f"input {self.input_height}x{self.input_width} too small for the conv stack")

    @classmethod
    def for_grid(cls, width: int, height: int, **kw) -> Architecture:
        return cls(input_height=height, input_width=width, **kw)

    def conv_output_hw(self) -> tuple[int, int]:
        h, w = self.input_height, self.input_width
        for _ in self.conv_channels:
            h = (h - self.kernel) // self.stride + 1
            w = (w - self.kernel) // self.stride + 1
        return h, w

    @property
    def flatten_dim(self) -> int:
        h, w = self.conv_output_hw()
        return h * w * self.conv_channels[-1]

    def block_shapes(self) -> dict[str, tuple]:
        shapes = {}
        c_in = self.input_channels
        for i, c_out in enumerate(self.conv_channels, 1):
            shapes[f"conv{i}_w"] = (c_out, c_in, self.kernel, self.kernel)
            shapes[f"conv{i}_b"] = (c_out,)
            c_in = c_out
        widths = (self.flatten_dim, *self.fc_widths, self.n_actions)
        for i in range(len(widths) - 1):
            shapes[f"fc{i + 1}_w"] = (widths[i], widths[i + 1])
            shapes[f"fc{i + 1}_b"] = (widths[i + 1],)
        return shapes

    def parameter_count(self) -> int:
        return int(sum(np.prod(s) for s in self.block_shapes().values()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["fc_widths"] = list(self.fc_widths)
        return d


@dataclass
class QNetworkParams:
    arch: Architecture
    blocks: dict = field(default_factory=dict)

    def copy(self) -> QNetworkParams:
        return QNetworkParams(self.arch, {k: v.copy() for k, v in self.blocks.items()})

    def astype(self, dtype) -> QNetworkParams:
        return QNetworkParams(self.arch, {k: v.astype(dtype) for k, v in self.blocks.items()})

    def __getitem__(self, name):
        return self.blocks[name]

    def equals(self, other: QNetworkParams) -> bool:
        return self.arch == other.arch and all(
            np.array_equal(self.blocks[k], other.blocks[k]) for k in self.blocks)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.blocks.values())


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool

    def __post_init__(self):
        if not 0 <= self.a < N_ACTIONS:
            raise ValueError(f"action must be in 0..{N_ACTIONS - 1}")
        if not np.isfinite(self.r):
            raise ValueError("reward must be finite")


def init_network(seed: int, arch: Architecture | None = None) -> QNetworkParams:
    """Fan-in scaled uniform weights, zero biases."""
    arch = arch or Architecture()
    rng = np.random.default_rng(seed)
    blocks = {}
    names = list(arch.block_shapes().items())
    last_w = [n for n, _ in names if n.endswith("_w")][-1]
    for name, shape in names:
        if name.endswith("_b"):
            blocks[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
        gain = 3.0 if name == last_w else 6.0
        limit = np.sqrt(gain / fan_in)
        blocks[name] = rng.uniform(-limit, limit, size=shape)
    return QNetworkParams(arch, blocks)


def sync_target(params: QNetworkParams) -> QNetworkParams:
    return params.copy()


def _as_batch(obs: np.ndarray, arch: Architecture) -> np.ndarray:
    obs = np.asarray(obs)
    single = obs.ndim == 3
    if single:
        obs = obs[None]
    expected = (arch.input_channels, arch.input_height, arch.input_width)
    if obs.ndim != 4 or obs.shape[1:] != expected:
        raise ValueError(f"observation shape {obs.shape} does not match network input {expected}")
    return obs


def _im2col(x: np.ndarray, k: int, s: int) -> tuple[np.ndarray, tuple]:
    # x: (N, H, W, C) -> (N*Ho*Wo, C*k*k) with column order (C, ky, kx)
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
    n, ho, wo = win.shape[:3]
    return win.reshape(n * ho * wo, -1), (n, ho, wo)


def _forward(params: QNetworkParams, obs: np.ndarray, keep: bool):
    arch = params.arch
    b = params.blocks
    x = np.ascontiguousarray(obs.transpose(0, 2, 3, 1))
    cache = []
    n_conv = len(arch.conv_channels)
    for i in range(1, n_conv + 1):
        w = b[f"conv{i}_w"]
        cols, (n, ho, wo) = _im2col(x, arch.kernel, arch.stride)
        z = cols @ w.reshape(w.shape[0], -1).T
        z += b[f"conv{i}_b"]
        a = np.maximum(z, 0.0)
        if keep:
            cache.append((x.shape, cols, z))
        x = a.reshape(n, ho, wo, w.shape[0])
    h = x.reshape(x.shape[0], -1)
    n_fc = len(arch.fc_widths) + 1
    for i in range(1, n_fc + 1):
        z = h @ b[f"fc{i}_w"]
        z += b[f"fc{i}_b"]
        if keep:
            cache.append((h, z))
        h = np.maximum(z, 0.0) if i < n_fc else z
    return h, cache


def forward(params: QNetworkParams, obs: np.ndarray) -> np.ndarray:
    """Q-values for one observation ``(C, H, W)`` or a batch ``(N, C, H, W)``."""
    batch = _as_batch(obs, params.arch)
    q, _ = _forward(params, batch, keep=False)
    return q[0] if np.asarray(obs).ndim == 3 else q


def td_targets(target: QNetworkParams, rewards, next_obs, terminals, discount: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    y = rewards.copy()
    live = ~terminals
    if np.any(live):
        q_next = forward(target, np.asarray(next_obs)[live]).astype(np.float64)
        y[live] += discount * q_next.max(axis=1)
    return y


def td_target(transition: Transition, target: QNetworkParams, discount: float) -> float:
    """``r`` for terminal transitions, else ``r + discount * max_a' Q_target(s', a')``."""
    if transition.terminal:
        return float(transition.r)
    return float(transition.r + discount * float(np.max(forward(target, transition.s_next))))


def _batch_arrays(batch):
    if isinstance(batch, tuple) and len(batch) == 2:
        return np.asarray(batch[0]), np.asarray(batch[1], dtype=np.intp)
    obs = np.stack([t.s for t in batch])
    actions = np.array([t.a for t in batch], dtype=np.intp)
    return obs, actions


def loss(params: QNetworkParams, batch, targets) -> float:
    """Mean squared TD error over the batch, taken action only.

    ``batch`` is a sequence of :class:`Transition` or an ``(obs, actions)`` pair.
    """
    obs, actions = _batch_arrays(batch)
    q = forward(params, obs)
    pred = q[np.arange(len(actions)), actions].astype(np.float64)
    err = np.asarray(targets, dtype=np.float64) - pred
    return float(np.mean(err * err))


def loss_and_gradients(params: QNetworkParams, batch, targets):
    """Loss and the gradient of every parameter block."""
    obs, actions = _batch_arrays(batch)
    obs = _as_batch(obs, params.arch)
    arch = params.arch
    b = params.blocks
    q, cache = _forward(params, obs, keep=True)
    n = len(actions)
    rows = np.arange(n)
    pred = q[rows, actions].astype(np.float64)
    err = pred - np.asarray(targets, dtype=np.float64)
    value = float(np.mean(err * err))

    grads = {}
    dz = np.zeros_like(q)
    dz[rows, actions] = 2.0 * err / n
    n_conv = len(arch.conv_channels)
    n_fc = len(arch.fc_widths) + 1
    for i in range(n_fc, 0, -1):
        h, z = cache[n_conv + i - 1]
        if i < n_fc:
            dz = dz * (z > 0)
        grads[f"fc{i}_w"] = h.T @ dz
        grads[f"fc{i}_b"] = dz.sum(axis=0)
        dz = dz @ b[f"fc{i}_w"].T
    k, s = arch.kernel, arch.stride
    for i in range(n_conv, 0, -1):
        x_shape, cols, z = cache[i - 1]
        w = b[f"conv{i}_w"]
        dzm = dz.reshape(z.shape) * (z > 0)
        grads[f"conv{i}_w"] = (dzm.T @ cols).reshape(w.shape)
        grads[f"conv{i}_b"] = dzm.sum(axis=0)
        if i == 1:
            break
        n_, h_in, w_in, c_in = x_shape
        ho = (h_in - k) // s + 1
        wo = (w_in - k) // s + 1
        dcols = (dzm @ w.reshape(w.shape[0], -1)).reshape(n_, ho, wo, c_in, k, k)
        dx = np.zeros(x_shape, dtype=dcols.dtype)
        for ky in range(k):
            for kx in range(k):
                dx[:, ky:ky + s * (ho - 1) + 1:s, kx:kx + s * (wo - 1) + 1:s, :] += dcols[..., ky, kx]
        dz = dx
    return value, grads


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        flat = g.reshape(-1)
        total += float(np.dot(flat, flat))
    if np.isfinite(total):
        return float(np.sqrt(total))
    # overflowed: rescale by the largest magnitude
    peak = max((float(np.max(np.abs(g))) for g in grads.values() if g.size), default=0.0)
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    total = sum(float(np.sum((g / peak) ** 2)) for g in grads.values())
    return peak * float(np.sqrt(total))


class SGD:
    """Plain gradient descent with global-norm clipping."""

    def __init__(self, learning_rate: float = 1e-4, clip_norm: float | None = 10.0):
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm

    def _clip(self, grads: dict) -> dict:
        if self.clip_norm is None:
            return grads
        norm = global_norm(grads)
        if norm > self.clip_norm:
            scale = self.clip_norm / norm
            return {k: g * scale for k, g in grads.items()}
        return grads

    def apply(self, params: QNetworkParams, grads: dict) -> None:
        grads = self._clip(grads)
        for name, g in grads.items():
            params.blocks[name] -= self.learning_rate * g

    def state(self) -> dict:
        return {}


class Adam(SGD):
    def __init__(self, learning_rate: float = 1e-4, clip_norm: float | None = 10.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(learning_rate, clip_norm)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def apply(self, params: QNetworkParams, grads: dict) -> None:
        grads = self._clip(grads)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            tmp = np.multiply(g, 1.0 - self.beta1)
            m *= self.beta1
            m += tmp
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v *= self.beta2
            v += tmp
            # lr * (m / c1) / (sqrt(v / c2) + eps), computed in place
            np.divide(v, c2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.learning_rate / c1
            params.blocks[name] -= tmp


def make_optimizer(name: str, learning_rate: float, clip_norm: float | None = 10.0) -> SGD:
    name = name.lower()
    if name == "sgd":
        return SGD(learning_rate, clip_norm)
    if name == "adam":
        return Adam(learning_rate, clip_norm)
    raise ValueError(f"unknown optimizer {name!r}")


def grad_step(params: QNetworkParams, batch, targets, learning_rate: float | None = None,
              optimizer: SGD | None = None) -> tuple[QNetworkParams, float]:
    """One optimiser step on ``params`` (updated in place and returned) plus the pre-step loss.

    Raises :class:`DivergenceError` without touching ``params`` if the loss,
    any gradient or the updated weights are non-finite.
    """
    if optimizer is None:
        optimizer = SGD(1e-4 if learning_rate is None else learning_rate)
    elif learning_rate is not None:
        optimizer.learning_rate = learning_rate
    with np.errstate(over="ignore", invalid="ignore"):
        value, grads = loss_and_gradients(params, batch, targets)
    if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise DivergenceError(f"non-finite loss or gradient (loss={value})")
    if optimizer.learning_rate != 0:
        backup = {k: v.copy() for k, v in params.blocks.items()}
        with np.errstate(over="ignore", invalid="ignore"):
            optimizer.apply(params, grads)
        if not params.all_finite():
            params.blocks.update(backup)
            raise DivergenceError("update produced non-finite weights")
    return params, value


# -- checkpoints -------------------------------------------------------------
#
# Layout (little endian):
#   4 bytes  magic "SPQN"
#   u32      format version
#   u32      header length L
#   L bytes  UTF-8 JSON header: {"arch": {...}, "blocks": [[name, shape], ...], "meta": {...}}
#   then each block's float64 values in C order, in header order.


def save_checkpoint(params: QNetworkParams, path, meta: dict | None = None) -> None:
    shapes = params.arch.block_shapes()
    header = {
        "arch": params.arch.to_dict(),
        "blocks": [[name, list(shape)] for name, shape in shapes.items()],
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(head)))
        fh.write(head)
        for name in shapes:
            fh.write(np.ascontiguousarray(params.blocks[name], dtype="<f8").tobytes())


def load_checkpoint(path, expect: Architecture | None = None) -> tuple[QNetworkParams, dict]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a Q-network checkpoint")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + hlen].decode())
    arch = Architecture(**header["arch"])
    if expect is not None and arch != expect:
        raise CheckpointError(f"{path}: architecture {arch} does not match {expect}")
    shapes = arch.block_shapes()
    listed = {name: tuple(shape) for name, shape in header["blocks"]}
    if listed != shapes:
        raise CheckpointError(f"{path}: block shapes inconsistent with architecture")
    offset = 12 + hlen
    blocks = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated at block {name}")
        blocks[name] = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes after last block")
    params = QNetworkParams(arch, blocks)
    if not params.all_finite():
        raise CheckpointError(f"{path}: non-finite parameters")
    return params, header.get("meta", {})


def greedy_action(params: QNetworkParams, obs: np.ndarray) -> int:
    return int(np.argmax(forward(params, obs)))


def clone(params: QNetworkParams) -> QNetworkParams:
    return copy.deepcopy(params)


class GoalConditionedQ:
    """Q-values for a fixed map and goal as the agent sprite moves.

    The agent sprite only perturbs a small window of each convolution's
    output, so each query recomputes that window and applies the resulting
    change to the first dense layer as a low-rank update. Results match
    :func:`forward` up to floating-point summation order.
    """

    def __init__(self, params: QNetworkParams, elev: np.ndarray, goal, dtype=np.float32,
                 sprite_radius: int = 1):
        arch = params.arch
        self.arch = arch
        self.radius = sprite_radius
        self.p = params.astype(dtype)
        b = self.p.blocks
        base = np.zeros((arch.input_height, arch.input_width, arch.input_channels), dtype=dtype)
        base[..., 0] = elev
        gx, gy = goal
        r = sprite_radius
        base[max(0, gy - r):gy + r + 1, max(0, gx - r):gx + r + 1, 2] = 1.0
        self.acts = [base]
        x = base[None]
        self.wmats = []
        for i in range(1, len(arch.conv_channels) + 1):
            w = b[f"conv{i}_w"]
            wm = np.ascontiguousarray(w.reshape(w.shape[0], -1).T)
            self.wmats.append((wm, b[f"conv{i}_b"]))
            cols, (n, ho, wo) = _im2col(x, arch.kernel, arch.stride)
            a = np.maximum(cols @ wm + b[f"conv{i}_b"], 0.0).reshape(1, ho, wo, w.shape[0])
            self.acts.append(a[0])
            x = a
        last = self.acts[-1]
        self.f1_base = last.reshape(-1) @ b["fc1_w"] + b["fc1_b"]
        self.w1_rows = b["fc1_w"].reshape(last.shape[0], last.shape[1] * last.shape[2], -1)
        n_fc = len(arch.fc_widths) + 1
        self.tail = [(b[f"fc{i}_w"], b[f"fc{i}_b"]) for i in range(2, n_fc + 1)]

    def _out_range(self, lo, hi, size_out):
        k, s = self.arch.kernel, self.arch.stride
        return max(0, -((k - 1 - lo) // s)), min(size_out - 1, hi // s)

    def __call__(self, agent) -> np.ndarray:
        k, s = self.arch.kernel, self.arch.stride
        ax, ay = agent
        r = self.radius
        h0, w0 = self.acts[0].shape[:2]
        y0, y1 = max(0, ay - r), min(h0 - 1, ay + r)
        x0, x1 = max(0, ax - r), min(w0 - 1, ax + r)
        region = self.acts[0][y0:y1 + 1, x0:x1 + 1].copy()
        region[..., 1] = 1.0
        prev = self.acts[0]
        for li, (wm, bias) in enumerate(self.wmats, 1):
            out = self.acts[li]
            oy0, oy1 = self._out_range(y0, y1, out.shape[0])
            ox0, ox1 = self._out_range(x0, x1, out.shape[1])
            if oy0 > oy1 or ox0 > ox1:
                # change falls in rows/columns the strided kernel never reads
                return self._tail(self.f1_base)
            iy0, iy1 = oy0 * s, oy1 * s + k - 1
            ix0, ix1 = ox0 * s, ox1 * s + k - 1
            patch = prev[iy0:iy1 + 1, ix0:ix1 + 1].copy()
            cy0, cy1 = max(y0, iy0), min(y1, iy1)
            cx0, cx1 = max(x0, ix0), min(x1, ix1)
            patch[cy0 - iy0:cy1 - iy0 + 1, cx0 - ix0:cx1 - ix0 + 1] = \
                region[cy0 - y0:cy1 - y0 + 1, cx0 - x0:cx1 - x0 + 1]
            cols, (_, ho, wo) = _im2col(patch[None], k, s)
            region = np.maximum(cols @ wm + bias, 0.0).reshape(ho, wo, -1)
            prev = out
            y0, y1, x0, x1 = oy0, oy1, ox0, ox1
        delta = region - self.acts[-1][y0:y1 + 1, x0:x1 + 1]
        c = delta.shape[2]
        f = self.f1_base.copy()
        for row in range(y1 - y0 + 1):
            f += delta[row].reshape(-1) @ self.w1_rows[y0 + row, x0 * c:(x1 + 1) * c]
        return self._tail(f)

    def _tail(self, f1):
        h = np.maximum(f1, 0.0)
        for j, (w, bias) in enumerate(self.tail):
            h = h @ w + bias
            if j < len(self.tail) - 1:
                h = np.maximum(h, 0.0)
        return h
