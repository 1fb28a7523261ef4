"""Small fully convolutional pixel-labeling networks.

Two instances are used by the pipeline: a 3-stage net that scores every
pixel for "belongs to a text block" and a 2-stage net that scores pixels
for "lies near a character centroid". Both share one architecture: each
stage is a 3x3 convolution (zero padding 1), ReLU and 2x2 max-pool; the
pooled activation of every stage is projected to a single channel by a
1x1 convolution and upsampled (nearest neighbor) back to input size; the
stacked per-stage maps pass a final 1x1 convolution and a sigmoid.

Everything is plain float64 numpy. Training is stochastic gradient
descent with momentum and weight decay on a per-pixel cross-entropy
loss. Ground-truth maps are ProbabilityMap instances with values in
{0, 1}.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import OrientedRect
from .imaging import GrayImage, ProbabilityMap, resize_bilinear, resize_image

_MAGIC = b"PXNET1"
_CLAMP = 1e-7


@dataclass(frozen=True)
class PixelNetConfig:
    stage_count: int
    channels_per_stage: tuple[int, ...]
    kernel_size: int = 3
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0001
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels_per_stage", tuple(int(c) for c in self.channels_per_stage))
        if self.stage_count < 1:
            raise ValueError("stage_count must be >= 1")
        if len(self.channels_per_stage) != self.stage_count:
            raise ValueError("need one channel count per stage")
        if any(c < 1 for c in self.channels_per_stage):
            raise ValueError("channel counts must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must not be negative")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and positive")


def _layout(config: PixelNetConfig) -> list[tuple[str, tuple[int, ...], int]]:
    """(name, shape, offset) for every parameter block, in storage order."""
    k = config.kernel_size
    entries = []
    offset = 0

    def add(name, shape):
        nonlocal offset
        entries.append((name, shape, offset))
        offset += int(np.prod(shape))

    c_prev = 1
    for i, c in enumerate(config.channels_per_stage):
        add(f"conv_w{i}", (c, c_prev, k, k))
        add(f"conv_b{i}", (c,))
        c_prev = c
    for i, c in enumerate(config.channels_per_stage):
        add(f"side_w{i}", (c,))
        add(f"side_b{i}", (1,))
    add("fuse_w", (config.stage_count,))
    add("fuse_b", (1,))
    return entries


def parameter_count(config: PixelNetConfig) -> int:
    name, shape, offset = _layout(config)[-1]
    return offset + int(np.prod(shape))


@dataclass(frozen=True)
class PixelNet:
    """Immutable bundle of a config and one flat parameter vector."""

    config: PixelNetConfig
    params: np.ndarray

    def __post_init__(self):
        expected = parameter_count(self.config)
        if self.params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {self.params.shape}")
        p = np.asarray(self.params, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    def view(self, name: str) -> np.ndarray:
        for n, shape, offset in _layout(self.config):
            if n == name:
                return self.params[offset : offset + int(np.prod(shape))].reshape(shape)
        raise KeyError(name)


def create_net(config: PixelNetConfig) -> PixelNet:
    """Seeded uniform init in [-a, a], a = sqrt(3 / fan_in); biases zero."""
    rng = np.random.default_rng([config.seed, 0])
    params = np.zeros(parameter_count(config), dtype=np.float64)
    k = config.kernel_size
    c_prev = 1
    fan = {}
    for i, c in enumerate(config.channels_per_stage):
        fan[f"conv_w{i}"] = c_prev * k * k
        fan[f"side_w{i}"] = c
        c_prev = c
    fan["fuse_w"] = config.stage_count
    for name, shape, offset in _layout(config):
        if name in fan:
            a = math.sqrt(3.0 / fan[name])
            n = int(np.prod(shape))
            params[offset : offset + n] = rng.uniform(-a, a, size=n)
    return PixelNet(config, params)


# ---------------------------------------------------------------------------
# forward / backward primitives


def _conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    pad = w.shape[2] // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, w.shape[2:], axis=(1, 2))
    return np.einsum("oikl,ihwkl->ohw", w, win, optimize=True) + b[:, None, None]


def _conv_backward(x, w, grad_out):
    pad = w.shape[2] // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, w.shape[2:], axis=(1, 2))
    grad_w = np.einsum("ohw,ihwkl->oikl", grad_out, win, optimize=True)
    grad_b = grad_out.sum(axis=(1, 2))
    gp = np.pad(grad_out, ((0, 0), (pad, pad), (pad, pad)))
    gwin = sliding_window_view(gp, w.shape[2:], axis=(1, 2))
    grad_x = np.einsum("oikl,ohwkl->ihw", w[:, :, ::-1, ::-1], gwin, optimize=True)
    return grad_w, grad_b, grad_x


def _pool(x: np.ndarray):
    c, h, w = x.shape
    x4 = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = x4.argmax(axis=-1)
    out = np.take_along_axis(x4, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _unpool(grad: np.ndarray, idx: np.ndarray, out_shape):
    c, h, w = out_shape
    g4 = np.zeros((c, h // 2, w // 2, 4), dtype=np.float64)
    np.put_along_axis(g4, idx[..., None], grad[..., None], axis=-1)
    return g4.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)


def _upsample(m: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(m, factor, axis=0), factor, axis=1)


def _downsum(grad: np.ndarray, factor: int) -> np.ndarray:
    h, w = grad.shape
    return grad.reshape(h // factor, factor, w // factor, factor).sum(axis=(1, 3))


def _forward_cached(net: PixelNet, data: np.ndarray):
    cfg = net.config
    h, w = data.shape
    div = 1 << cfg.stage_count
    if h % div or w % div:
        raise ValueError("unpadded input")
    x = (data.astype(np.float64) / 255.0)[None, :, :]
    stage_in, pre_relu, pooled, pool_idx, side_maps = [], [], [], [], []
    for i in range(cfg.stage_count):
        stage_in.append(x)
        z = _conv(x, net.view(f"conv_w{i}"), net.view(f"conv_b{i}"))
        pre_relu.append(z)
        r = np.maximum(z, 0.0)
        a, idx = _pool(r)
        pooled.append(a)
        pool_idx.append(idx)
        m = np.tensordot(net.view(f"side_w{i}"), a, axes=(0, 0)) + net.view(f"side_b{i}")[0]
        side_maps.append(_upsample(m, 1 << (i + 1)))
        x = a
    stacked = np.stack(side_maps)
    fused = np.tensordot(net.view("fuse_w"), stacked, axes=(0, 0)) + net.view("fuse_b")[0]
    prob = 1.0 / (1.0 + np.exp(-fused))
    cache = (stage_in, pre_relu, pooled, pool_idx, stacked, prob)
    return prob, cache


def forward(net: PixelNet, image: GrayImage) -> ProbabilityMap:
    """Per-pixel sigmoid scores; requires dimensions divisible by 2^stages."""
    prob, _ = _forward_cached(net, image.data)
    return ProbabilityMap(np.clip(prob, 1e-12, 1.0 - 1e-12))


def predict(net: PixelNet, image: GrayImage) -> ProbabilityMap:
    """Forward pass on arbitrary sizes: zero-pad right/bottom, then crop."""
    div = 1 << net.config.stage_count
    h, w = image.data.shape
    ph = (div - h % div) % div
    pw = (div - w % div) % div
    if ph == 0 and pw == 0:
        return forward(net, image)
    padded = np.pad(image.data, ((0, ph), (0, pw)))
    prob, _ = _forward_cached(net, padded)
    return ProbabilityMap(np.clip(prob[:h, :w], 1e-12, 1.0 - 1e-12))


def loss_and_gradient(net: PixelNet, image: GrayImage, gt: ProbabilityMap):
    """Mean cross-entropy over pixels and its exact parameter gradient."""
    if gt.data.shape != image.data.shape:
        raise ValueError("image and ground truth dimensions differ")
    cfg = net.config
    prob, cache = _forward_cached(net, image.data)
    stage_in, pre_relu, pooled, pool_idx, stacked, _ = cache
    y = gt.data
    n = prob.size
    pc = np.clip(prob, _CLAMP, 1.0 - _CLAMP)
    loss = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))

    grad = np.zeros_like(net.params)

    def gview(name):
        for nm, shape, offset in _layout(cfg):
            if nm == name:
                return grad[offset : offset + int(np.prod(shape))].reshape(shape)
        raise KeyError(name)

    # d(loss)/d(prob) is zero wherever the clamp is active
    live = (prob > _CLAMP) & (prob < 1.0 - _CLAMP)
    dp = np.where(live, (-y / pc + (1.0 - y) / (1.0 - pc)) / n, 0.0)
    dz = dp * prob * (1.0 - prob)

    gview("fuse_w")[:] = np.tensordot(dz, stacked, axes=([0, 1], [1, 2]))
    gview("fuse_b")[:] = dz.sum()
    d_stacked = net.view("fuse_w")[:, None, None] * dz

    d_pooled_next = None  # gradient flowing into stage i's pooled output from stage i+1
    for i in reversed(range(cfg.stage_count)):
        dm = _downsum(d_stacked[i], 1 << (i + 1))
        da = net.view(f"side_w{i}")[:, None, None] * dm
        if d_pooled_next is not None:
            da = da + d_pooled_next
        gview(f"side_w{i}")[:] = np.tensordot(dm, pooled[i], axes=([0, 1], [1, 2]))
        gview(f"side_b{i}")[:] = dm.sum()
        dr = _unpool(da, pool_idx[i], pre_relu[i].shape)
        dzc = dr * (pre_relu[i] > 0.0)
        gw, gb, dx = _conv_backward(stage_in[i], net.view(f"conv_w{i}"), dzc)
        gview(f"conv_w{i}")[:] = gw
        gview(f"conv_b{i}")[:] = gb
        d_pooled_next = dx
    return loss, grad


def corpus_loss(net: PixelNet, corpus) -> float:
    total = 0.0
    for image, gt in corpus:
        prob, _ = _forward_cached(net, image.data)
        pc = np.clip(prob, _CLAMP, 1.0 - _CLAMP)
        y = gt.data
        total += float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))
    return total / len(corpus)


def train(net: PixelNet, corpus, iterations: int, log_fn=None, log_every: int = 100) -> PixelNet:
    """Momentum SGD over single sampled examples; returns the updated net."""
    if not corpus:
        raise ValueError("empty corpus")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    cfg = net.config
    rng = np.random.default_rng([cfg.seed, 1])
    params = net.params.copy()
    params.setflags(write=True)
    velocity = np.zeros_like(params)
    current = PixelNet(cfg, params)
    for step in range(iterations):
        image, gt = corpus[int(rng.integers(len(corpus)))]
        _, grad = loss_and_gradient(current, image, gt)
        velocity = cfg.momentum * velocity - cfg.learning_rate * (grad + cfg.weight_decay * current.params)
        current = PixelNet(cfg, current.params + velocity)
        if log_fn is not None and (step + 1) % log_every == 0:
            log_fn(step + 1, corpus_loss(current, corpus))
    return current


# ---------------------------------------------------------------------------
# ground-truth construction


def _pixel_centers(width: int, height: int) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(width), np.arange(height))
    return np.column_stack((xs.ravel(), ys.ravel())).astype(np.float64)


def make_block_gt(image_size: tuple[int, int], line_boxes) -> ProbabilityMap:
    """1 where the pixel center falls inside any line box."""
    width, height = image_size
    out = np.zeros(width * height, dtype=bool)
    if line_boxes:
        pts = _pixel_centers(width, height)
        for box in line_boxes:
            out |= box.contains_points(pts)
    return ProbabilityMap(out.reshape(height, width).astype(np.float64))


def make_centroid_gt(image_size: tuple[int, int], chars) -> ProbabilityMap:
    """1 where some character centroid is closer than 15% of its height."""
    width, height = image_size
    out = np.zeros((height, width), dtype=bool)
    ys, xs = np.mgrid[0:height, 0:width]
    for (cx, cy), char_height in chars:
        if char_height <= 0:
            raise ValueError("character height must be positive")
        r = 0.15 * float(char_height)
        d2 = (xs - float(cx)) ** 2 + (ys - float(cy)) ** 2
        out |= d2 < r * r
    return ProbabilityMap(out.astype(np.float64))


def multi_scale_saliency(net: PixelNet, image: GrayImage, heights) -> ProbabilityMap:
    """Average of forward passes at several proportional rescalings."""
    heights = list(heights)
    if not heights:
        raise ValueError("empty heights list")
    h, w = image.data.shape
    acc = np.zeros((h, w), dtype=np.float64)
    for target in heights:
        if target <= 0:
            raise ValueError("scale heights must be positive")
        scale_w = max(1, round(w * target / h))
        scaled = image if (target == h and scale_w == w) else resize_image(image, scale_w, int(target))
        prob = predict(net, scaled)
        back = prob.data if prob.data.shape == (h, w) else resize_bilinear(prob.data, w, h)
        acc += back
    return ProbabilityMap(np.clip(acc / len(heights), 0.0, 1.0))


# ---------------------------------------------------------------------------
# model file


def save_model(net: PixelNet, path) -> None:
    """Binary dump: magic, config block, then float64 LE parameters."""
    cfg = net.config
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", cfg.stage_count))
        fh.write(struct.pack(f"<{cfg.stage_count}I", *cfg.channels_per_stage))
        fh.write(struct.pack("<I", cfg.kernel_size))
        fh.write(struct.pack("<3d", cfg.learning_rate, cfg.momentum, cfg.weight_decay))
        fh.write(struct.pack("<q", cfg.seed))
        fh.write(net.params.astype("<f8").tobytes())


def load_model(path) -> PixelNet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_MAGIC):
        raise ValueError("not a model file (bad magic)")
    off = len(_MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise ValueError("model file truncated")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (stage_count,) = take("<I")
    if stage_count < 1 or stage_count > 64:
        raise ValueError("implausible stage count")
    channels = take(f"<{stage_count}I")
    (kernel_size,) = take("<I")
    lr, momentum, wd = take("<3d")
    (seed,) = take("<q")
    cfg = PixelNetConfig(stage_count, channels, kernel_size, lr, momentum, wd, seed)
    n = parameter_count(cfg)
    expected = off + 8 * n
    if len(blob) != expected:
        raise ValueError(f"model file holds {len(blob) - off} parameter bytes, expected {8 * n}")
    params = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64)
    return PixelNet(cfg, params)
