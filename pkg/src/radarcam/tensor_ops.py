"""Dense numeric primitives: convolution, linear maps, activations, pooling
and continuous-coordinate sampling.

All operations are pure functions, evaluate forward only and compute in
float64 regardless of the input dtype. Feature maps follow the channels-first
layout (C, H, W). Sampling uses the pixel-center convention: the center of
pixel (row i, col j) sits at continuous coordinate (u=j, v=i), and
coordinates outside the grid read as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """An input does not satisfy an operation's shape contract."""


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class Conv2DParams:
    """Parameters of a single 2D cross-correlation layer.

    ``weights`` has shape (out_ch, in_ch, kH, kW) with odd kernel sides,
    ``bias`` has shape (out_ch,). ``padding`` is per-side zero padding
    (top, bottom, left, right).
    """

    weights: np.ndarray
    bias: np.ndarray
    padding: tuple[int, int, int, int] = (0, 0, 0, 0)
    stride: int = 1

    def __post_init__(self):
        w = _as_f64(self.weights)
        b = _as_f64(self.bias)
        if w.ndim != 4:
            raise ShapeError(f"conv weights must be 4D, got shape {w.shape}")
        out_ch, _, kh, kw = w.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel sides must be odd, got {kh}x{kw}")
        if b.shape != (out_ch,):
            raise ShapeError(f"bias shape {b.shape} does not match {out_ch} output channels")
        if len(self.padding) != 4 or any(p < 0 for p in self.padding):
            raise ShapeError(f"padding must be 4 non-negative ints, got {self.padding}")
        if self.stride < 1:
            raise ShapeError(f"stride must be positive, got {self.stride}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "padding", tuple(int(p) for p in self.padding))

    @classmethod
    def same(cls, weights, bias, stride: int = 1) -> "Conv2DParams":
        """Padding that preserves H and W for odd kernels at stride 1."""
        w = _as_f64(weights)
        if w.ndim != 4:
            raise ShapeError(f"conv weights must be 4D, got shape {w.shape}")
        ph, pw = (w.shape[2] - 1) // 2, (w.shape[3] - 1) // 2
        return cls(w, bias, (ph, ph, pw, pw), stride)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class LinearParams:
    """Affine map y = W x + b with W of shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _as_f64(self.weights)
        b = _as_f64(self.bias)
        if w.ndim != 2:
            raise ShapeError(f"linear weights must be 2D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match {w.shape[0]} outputs")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]

    @property
    def in_features(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class MLPParams:
    """A stack of linear layers with a rectifier between consecutive layers."""

    layers: tuple[LinearParams, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("an MLP needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_features != b.in_features:
                raise ShapeError(
                    f"layer widths do not chain: {a.out_features} -> {b.in_features}"
                )
        object.__setattr__(self, "layers", layers)


def conv2d(x: np.ndarray, params: Conv2DParams) -> np.ndarray:
    """2D cross-correlation with zero padding.

    ``x`` is (C_in, H, W); the result is (C_out, H', W') where the output
    extent follows the usual (H + pad - k) // stride + 1 rule.
    """
    x = _as_f64(x)
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be (C, H, W), got shape {x.shape}")
    out_ch, in_ch, kh, kw = params.weights.shape
    if x.shape[0] != in_ch:
        raise ShapeError(f"input has {x.shape[0]} channels, weights expect {in_ch}")
    pt, pb, pl, pr = params.padding
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr)))
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ShapeError(
            f"padded input {xp.shape[1]}x{xp.shape[2]} smaller than kernel {kh}x{kw}"
        )
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, :: params.stride, :: params.stride]
    out = np.einsum("oikl,ihwkl->ohw", params.weights, windows, optimize=True)
    return out + params.bias[:, None, None]


def linear(x: np.ndarray, params: LinearParams) -> np.ndarray:
    """Affine map of a vector: W x + b."""
    x = _as_f64(x)
    if x.ndim != 1:
        raise ShapeError(f"linear input must be a vector, got shape {x.shape}")
    if x.shape[0] != params.in_features:
        raise ShapeError(f"input length {x.shape[0]} != weight columns {params.in_features}")
    return params.weights @ x + params.bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(_as_f64(x), 0.0)


def mlp(x: np.ndarray, params: MLPParams) -> np.ndarray:
    """Apply the layer stack with a rectifier between consecutive layers."""
    out = _as_f64(x)
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        out = linear(out, layer)
        if i != last:
            out = relu(out)
    return out


def softmax(x: np.ndarray, axis: int) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max subtraction)."""
    x = _as_f64(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, stable for large |x|."""
    x = _as_f64(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def global_pool(x: np.ndarray, mode: str) -> np.ndarray:
    """Per-channel spatial reduction of a (C, H, W) map to a length-C vector."""
    x = _as_f64(x)
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ShapeError(f"global_pool input must be (C, H>=1, W>=1), got {x.shape}")
    if mode == "avg":
        return np.mean(x, axis=(1, 2))
    if mode == "max":
        return np.max(x, axis=(1, 2))
    raise ValueError(f"unknown pooling mode {mode!r}")


def channel_reduce(x: np.ndarray, mode: str) -> np.ndarray:
    """Reduce a (C, H, W) map across channels to (1, H, W)."""
    x = _as_f64(x)
    if x.ndim != 3 or x.shape[0] < 1:
        raise ShapeError(f"channel_reduce input must be (C>=1, H, W), got {x.shape}")
    if mode == "max":
        return np.max(x, axis=0, keepdims=True)
    if mode == "mean":
        return np.mean(x, axis=0, keepdims=True)
    raise ValueError(f"unknown reduction mode {mode!r}")


def bilinear_sample(fmap: np.ndarray, uv) -> np.ndarray:
    """Bilinear interpolation of a (C, H, W) map at continuous (u, v).

    Pixel centers sit at integer coordinates; neighbors outside the grid
    contribute zero, so a point fully outside returns the zero vector.
    """
    fmap = _as_f64(fmap)
    if fmap.ndim != 3:
        raise ShapeError(f"bilinear_sample map must be (C, H, W), got {fmap.shape}")
    c, h, w = fmap.shape
    u, v = float(uv[0]), float(uv[1])
    x0 = int(np.floor(u))
    y0 = int(np.floor(v))
    fu = u - x0
    fv = v - y0
    out = np.zeros(c, dtype=np.float64)
    for dx, dy, wt in (
        (0, 0, (1.0 - fu) * (1.0 - fv)),
        (1, 0, fu * (1.0 - fv)),
        (0, 1, (1.0 - fu) * fv),
        (1, 1, fu * fv),
    ):
        xi, yi = x0 + dx, y0 + dy
        if 0 <= xi < w and 0 <= yi < h:
            out += wt * fmap[:, yi, xi]
    return out


def trilinear_sample(volume: np.ndarray, uvd) -> float:
    """Trilinear interpolation of a (D, H, W) volume at continuous (u, v, d).

    The third coordinate indexes the leading (depth) axis; cell centers sit
    at integer coordinates and out-of-bounds neighbors read as zero.
    """
    volume = _as_f64(volume)
    if volume.ndim != 3:
        raise ShapeError(f"trilinear_sample volume must be (D, H, W), got {volume.shape}")
    d, h, w = volume.shape
    u, v, b = float(uvd[0]), float(uvd[1]), float(uvd[2])
    x0 = int(np.floor(u))
    y0 = int(np.floor(v))
    z0 = int(np.floor(b))
    fu = u - x0
    fv = v - y0
    fb = b - z0
    acc = 0.0
    for dz in (0, 1):
        wz = (1.0 - fb) if dz == 0 else fb
        for dy in (0, 1):
            wy = (1.0 - fv) if dy == 0 else fv
            for dx in (0, 1):
                wx = (1.0 - fu) if dx == 0 else fu
                xi, yi, zi = x0 + dx, y0 + dy, z0 + dz
                if 0 <= xi < w and 0 <= yi < h and 0 <= zi < d:
                    acc += wz * wy * wx * volume[zi, yi, xi]
    return acc
