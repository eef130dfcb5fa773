"""Shared builders for test parameters."""

from __future__ import annotations

import numpy as np

from radarcam.fusion import CSAFusionParams, ConcatFusionParams
from radarcam.tensor_ops import Conv2DParams, LinearParams, MLPParams
from radarcam.view_transform import VTParams


def identity_conv(channels: int, kernel: int = 3) -> Conv2DParams:
    """Same-padded conv that reproduces its input exactly."""
    w = np.zeros((channels, channels, kernel, kernel))
    mid = kernel // 2
    for c in range(channels):
        w[c, c, mid, mid] = 1.0
    return Conv2DParams.same(w, np.zeros(channels))


def selection_conv(in_channels: int, out_channels: int, offset: int, kernel: int = 3) -> Conv2DParams:
    """Same-padded conv that copies input channels [offset, offset+out)."""
    w = np.zeros((out_channels, in_channels, kernel, kernel))
    mid = kernel // 2
    for c in range(out_channels):
        w[c, offset + c, mid, mid] = 1.0
    return Conv2DParams.same(w, np.zeros(out_channels))


def random_conv(rng: np.random.Generator, out_ch: int, in_ch: int, kernel: int) -> Conv2DParams:
    w = rng.normal(0.0, 0.5, size=(out_ch, in_ch, kernel, kernel))
    b = rng.normal(0.0, 0.1, size=out_ch)
    return Conv2DParams.same(w, b)


def random_linear(rng: np.random.Generator, out_f: int, in_f: int) -> LinearParams:
    return LinearParams(rng.normal(0.0, 0.5, size=(out_f, in_f)), rng.normal(0.0, 0.1, size=out_f))


def random_mlp(rng: np.random.Generator, channels: int) -> MLPParams:
    hidden = max(1, channels // 3)
    return MLPParams((random_linear(rng, hidden, channels), random_linear(rng, channels, hidden)))


def zero_mlp(channels: int, final_bias: float = 0.0) -> MLPParams:
    hidden = max(1, channels // 3)
    return MLPParams(
        (
            LinearParams(np.zeros((hidden, channels)), np.zeros(hidden)),
            LinearParams(np.zeros((channels, hidden)), np.full(channels, final_bias)),
        )
    )


def zero_conv(out_ch: int, in_ch: int, kernel: int, bias: float = 0.0) -> Conv2DParams:
    return Conv2DParams.same(np.zeros((out_ch, in_ch, kernel, kernel)), np.full(out_ch, bias))


def zero_csa_params(channels: int) -> CSAFusionParams:
    """All-zero attention parameters: every gate sits at sigmoid(0) = 0.5."""
    return CSAFusionParams(
        in_conv=zero_conv(channels, 2 * channels, 3),
        channel_mlp_radar=zero_mlp(channels),
        channel_mlp_image=zero_mlp(channels),
        mid_conv=zero_conv(channels, 2 * channels, 3),
        spatial_conv_radar=zero_conv(1, 2, 7),
        spatial_conv_image=zero_conv(1, 2, 7),
        out_conv=zero_conv(channels, 2 * channels, 3),
    )


def random_csa_params(rng: np.random.Generator, channels: int) -> CSAFusionParams:
    return CSAFusionParams(
        in_conv=random_conv(rng, channels, 2 * channels, 3),
        channel_mlp_radar=random_mlp(rng, channels),
        channel_mlp_image=random_mlp(rng, channels),
        mid_conv=random_conv(rng, channels, 2 * channels, 3),
        spatial_conv_radar=random_conv(rng, 1, 2, 7),
        spatial_conv_image=random_conv(rng, 1, 2, 7),
        out_conv=random_conv(rng, channels, 2 * channels, 3),
    )


def random_concat_params(rng: np.random.Generator, channels: int) -> ConcatFusionParams:
    return ConcatFusionParams(
        first=random_conv(rng, channels, 2 * channels, 3),
        second=random_conv(rng, channels, channels, 3),
    )


def random_vt_params(
    rng: np.random.Generator,
    c: int,
    z: int,
    d: int,
    radar_channels: int,
    use_extrinsics: bool = False,
) -> VTParams:
    emb_in = 25 if use_extrinsics else 9
    return VTParams(
        occupancy_conv=random_conv(rng, z, radar_channels, 1),
        depth_conv=random_conv(rng, d, c, 1),
        embedding=random_linear(rng, c, emb_in),
        post_convs=(
            random_conv(rng, c, 2 * c * z, 3),
            random_conv(rng, c, c, 3),
            random_conv(rng, c, c, 3),
        ),
        use_extrinsics_embedding=use_extrinsics,
    )
