"""Small convolutional networks with hand-written backward passes.

Activations are NHWC. The trunk is a stack of ``conv -> ReLU -> 2x2 mean-pool``
blocks, then either flatten or global mean-pool, then a fully connected layer
with ReLU whose output is the descriptor. Pose networks add a linear head.
"""
from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, ShapeError

WEIGHTS_MAGIC = b"WPNN1"


@dataclass(frozen=True)
class NetConfig:
    input_size: int = 64
    channels: tuple = (8, 16, 32, 32)
    first_kernel: int = 3  # 3 or 7
    descriptor_dim: int = 64
    head_dim: int = 19  # 0 for descriptor-only networks
    global_pool: bool = False

    def __post_init__(self):
        s = self.input_size
        if s % (2 ** len(self.channels)) != 0:
            raise ShapeError(f"input size {s} not divisible by 2^{len(self.channels)}")
        if self.first_kernel % 2 == 0:
            raise ShapeError("kernel sizes must be odd")


class Conv:
    def __init__(self, cin, cout, ksize, rng, dtype, first=False):
        fan_in = cin * ksize * ksize
        self.w = (rng.standard_normal((cin * ksize * ksize, cout)) * np.sqrt(2.0 / fan_in)).astype(dtype)
        self.b = np.zeros(cout, dtype=dtype)
        self.k = ksize
        self.first = first

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        n, h, w, c = x.shape
        k, p = self.k, self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        # im2col with columns ordered (row offset, column offset, channel)
        cols = np.concatenate([xp[:, i:i + h, j:j + w, :] for i in range(k) for j in range(k)], axis=-1)
        cols = cols.reshape(n * h * w, k * k * c)
        out = cols @ self.w + self.b
        return out.reshape(n, h, w, -1), (cols, x.shape)

    def backward(self, dout, cache):
        cols, (n, h, w, c) = cache
        d2 = dout.reshape(n * h * w, -1)
        grads = [cols.T @ d2, d2.sum(axis=0)]
        if self.first:
            return None, grads
        k, p = self.k, self.k // 2
        dcols = (d2 @ self.w.T).reshape(n, h, w, k * k, c)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i * k + j, :]
        return dxp[:, p:p + h, p:p + w, :], grads


class Dense:
    def __init__(self, din, dout, rng, dtype, relu_gain=True):
        scale = np.sqrt((2.0 if relu_gain else 1.0) / din)
        self.w = (rng.standard_normal((din, dout)) * scale).astype(dtype)
        self.b = np.zeros(dout, dtype=dtype)

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        return x @ self.w + self.b, x

    def backward(self, dout, x):
        return dout @ self.w.T, [x.T @ dout, dout.sum(axis=0)]


def _relu_fwd(x):
    mask = x > 0
    return x * mask, mask


def _pool_fwd(x):
    return (x[:, 0::2, 0::2] + x[:, 1::2, 0::2] + x[:, 0::2, 1::2] + x[:, 1::2, 1::2]) * 0.25


def _pool_bwd(d):
    return np.repeat(np.repeat(d, 2, axis=1), 2, axis=2) * 0.25


class TinyNet:
    """Conv trunk + descriptor layer (+ optional linear head)."""

    def __init__(self, config: NetConfig = NetConfig(), seed=0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.convs = []
        cin = 1
        for i, cout in enumerate(config.channels):
            k = config.first_kernel if i == 0 else 3
            self.convs.append(Conv(cin, cout, k, rng, self.dtype, first=(i == 0)))
            cin = cout
        side = config.input_size // 2 ** len(config.channels)
        flat = cin if config.global_pool else cin * side * side
        self.fc = Dense(flat, config.descriptor_dim, rng, self.dtype)
        self.head = Dense(config.descriptor_dim, config.head_dim, rng, self.dtype, relu_gain=False) if config.head_dim else None

    @property
    def layers(self):
        return [*self.convs, self.fc] + ([self.head] if self.head is not None else [])

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def set_params(self, values):
        values = list(values)
        if len(values) != len(self.params):
            raise ShapeError("parameter count mismatch")
        for layer in self.layers:
            for name in ("w", "b"):
                v = np.asarray(values.pop(0))
                if v.shape != getattr(layer, name).shape:
                    raise ShapeError(f"parameter shape {v.shape} != {getattr(layer, name).shape}")
                setattr(layer, name, v.astype(self.dtype).copy())

    def copy(self):
        return copy.deepcopy(self)

    def weight_sq_norm(self) -> float:
        return float(sum(np.sum(p.astype(np.float64) ** 2) for p in self.params))

    def _prepare(self, images):
        x = np.asarray(images)
        if x.ndim == 2:
            x = x[None]
        s = self.config.input_size
        if x.ndim != 3 or x.shape[1:] != (s, s):
            raise ShapeError(f"expected images of shape ({s}, {s}), got {x.shape[-2:]}")
        return x.astype(self.dtype, copy=False)[..., None]

    def forward(self, images, keep_cache=False):
        """Return ``(features, head, cache)`` for a batch ``(N, H, W)``."""
        x = self._prepare(images)
        caches = []
        for conv in self.convs:
            x, cc = conv.forward(x)
            x, mask = _relu_fwd(x)
            caches.append((cc, mask, x.shape))
            x = _pool_fwd(x)
        pooled_shape = x.shape
        x = x.mean(axis=(1, 2)) if self.config.global_pool else x.reshape(x.shape[0], -1)
        z, fc_in = self.fc.forward(x)
        feat, fmask = _relu_fwd(z)
        head_out = None
        if self.head is not None:
            head_out, _ = self.head.forward(feat)
        cache = (caches, pooled_shape, fc_in, fmask, feat) if keep_cache else None
        return feat, head_out, cache

    def backward(self, cache, d_features=None, d_head=None):
        """Gradients for every parameter, in ``self.params`` order."""
        caches, pooled_shape, fc_in, fmask, feat = cache
        n = feat.shape[0]
        d_feat = np.zeros_like(feat) if d_features is None else np.asarray(d_features, dtype=self.dtype).reshape(feat.shape)
        head_grads = []
        if self.head is not None:
            if d_head is None:
                d_head = np.zeros((n, self.config.head_dim), dtype=self.dtype)
            d_head = np.asarray(d_head, dtype=self.dtype)
            if d_head.shape != (n, self.config.head_dim):
                raise ShapeError(f"head gradient shape {d_head.shape}")
            dh_in, head_grads = self.head.backward(d_head, feat)
            d_feat = d_feat + dh_in
        elif d_head is not None:
            raise ShapeError("network has no head")
        dz = d_feat * fmask
        dx, fc_grads = self.fc.backward(dz, fc_in)
        if self.config.global_pool:
            _, h, w, c = pooled_shape
            dx = np.broadcast_to(dx[:, None, None, :] / (h * w), pooled_shape)
        else:
            dx = dx.reshape(pooled_shape)
        conv_grads = []
        for conv, (cc, mask, shape) in zip(reversed(self.convs), reversed(caches)):
            dx = _pool_bwd(dx) * mask
            dx, g = conv.backward(dx, cc)
            conv_grads = g + conv_grads
        return conv_grads + fc_grads + head_grads

    def describe(self, images):
        """Float32 descriptors, one forward pass per image.

        Per-image passes keep the bits independent of how images are batched.
        """
        x = np.asarray(images)
        single = x.ndim == 2
        if single:
            x = x[None]
        d = np.concatenate([self.forward(img)[0] for img in x]).astype(np.float32)
        return d[0] if single else d

    def predict(self, images, batch_size=64):
        x = np.asarray(images)
        single = x.ndim == 2
        if single:
            x = x[None]
        out = [self.forward(x[i:i + batch_size])[1] for i in range(0, len(x), batch_size)]
        d = np.concatenate(out).astype(np.float64)
        return d[0] if single else d


def net_forward(net: TinyNet, img):
    """Features and head output (``None`` without a head) for one image."""
    feat, head, _ = net.forward(img)
    return feat[0], (None if head is None else head[0])


def net_backward(net: TinyNet, img, d_features=None, d_head=None):
    img = np.asarray(img)
    batch = img if img.ndim == 3 else img[None]
    _, _, cache = net.forward(batch, keep_cache=True)
    df = None if d_features is None else np.asarray(d_features).reshape(len(batch), -1)
    dh = None if d_head is None else np.asarray(d_head).reshape(len(batch), -1)
    return net.backward(cache, df, dh)


# -- weight files -----------------------------------------------------------

def save_weights(net: TinyNet, path):
    """``WPNN1``, u32 config length + JSON config, u32 array count, then per array
    a u32 rank, u32 dims and little-endian float32 data."""
    cfg = net.config
    meta = json.dumps({
        "input_size": cfg.input_size, "channels": list(cfg.channels), "first_kernel": cfg.first_kernel,
        "descriptor_dim": cfg.descriptor_dim, "head_dim": cfg.head_dim, "global_pool": cfg.global_pool,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        params = net.params
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            fh.write(struct.pack("<I", p.ndim))
            fh.write(struct.pack(f"<{p.ndim}I", *p.shape))
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_weights(path, dtype=np.float32) -> TinyNet:
    with open(path, "rb") as fh:
        if fh.read(5) != WEIGHTS_MAGIC:
            raise FormatError(f"{path}: bad weights magic")
        (mlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(mlen))
        meta["channels"] = tuple(meta["channels"])
        net = TinyNet(NetConfig(**meta), seed=0, dtype=dtype)
        (count,) = struct.unpack("<I", fh.read(4))
        values = []
        for _ in range(count):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape))
            buf = fh.read(4 * size)
            if len(buf) != 4 * size:
                raise FormatError(f"{path}: truncated weights")
            values.append(np.frombuffer(buf, dtype="<f4").reshape(shape))
    net.set_params(values)
    return net
