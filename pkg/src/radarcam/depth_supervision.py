"""One-to-many depth supervision from radar points.

A radar point is projected onto the image plane and supervises every pixel
inside a disk around its projection. The disk radius scales with the point's
radar cross section (larger targets keep a consistent depth over a larger
image area) and shrinks with depth and feature stride:

    r = min(r_max, k * sqrt(fx * fy) / (s * d) * 10 ** (rcs_dbsm / 20))

The per-pixel loss combines a cross-entropy term against the nearest depth
bin with an L1 term on the expectation of the predicted depth distribution,
and a target's loss is the minimum (or maximum) over its neighborhood.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import BehindCameraError, CameraIntrinsics, SensorCalibration, project_to_pixel

LOG_PROB_FLOOR = 1e-12
NORMALIZATION_TOL = 1e-5


@dataclass(frozen=True)
class RadarPoint:
    """A radar detection in the radar frame, with optional RCS and Doppler."""

    x: float
    y: float
    z: float
    rcs_dbsm: float | None = None
    doppler: float | None = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"radar point coordinates must be finite: {self}")


@dataclass(frozen=True)
class DepthBinSpec:
    """Uniform discretization of the depth range [d_min, d_max) into bins."""

    d_min: float
    d_max: float
    num_bins: int
    spacing: str = "uniform"

    def __post_init__(self):
        if not self.d_min < self.d_max:
            raise ValueError(f"need d_min < d_max, got [{self.d_min}, {self.d_max})")
        if self.num_bins < 1:
            raise ValueError(f"need at least one bin, got {self.num_bins}")
        if self.spacing != "uniform":
            raise ValueError(f"unsupported bin spacing {self.spacing!r}")

    @property
    def bin_width(self) -> float:
        return (self.d_max - self.d_min) / self.num_bins

    def midpoints(self) -> np.ndarray:
        """Center depth of every bin, strictly increasing."""
        idx = np.arange(self.num_bins, dtype=np.float64)
        return self.d_min + (idx + 0.5) * self.bin_width

    def midpoint(self, index: int) -> float:
        return self.d_min + (index + 0.5) * self.bin_width


@dataclass(frozen=True)
class RadiusConfig:
    """Neighborhood radius settings. ``fixed_r`` is used when RCS is absent."""

    k: float = 0.1
    r_max: float = 2.0
    fixed_r: float | None = None

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.r_max < 0:
            raise ValueError(f"r_max must be non-negative, got {self.r_max}")
        if self.fixed_r is not None and self.fixed_r < 0:
            raise ValueError(f"fixed_r must be non-negative, got {self.fixed_r}")


@dataclass(frozen=True)
class DepthTarget:
    """A projected radar point on the feature grid: pixel, depth, radius."""

    u: int
    v: int
    d_gt: float
    radius: float


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 0.1
    lambda2: float = 0.1
    neighborhood_agg: str = "min"
    strategy: str = "one-to-many"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.neighborhood_agg not in ("min", "max"):
            raise ValueError(f"neighborhood_agg must be min or max, got {self.neighborhood_agg!r}")
        if self.strategy not in ("one-to-one", "one-to-many"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


def neighborhood_radius(
    depth: float,
    intrinsics: CameraIntrinsics,
    stride: int,
    cfg: RadiusConfig,
    rcs_dbsm: float | None = None,
) -> float:
    """Supervision radius in feature-map pixels for a point at ``depth`` meters.

    With an RCS value the radius follows the size-proportional formula above;
    without one it falls back to ``cfg.fixed_r``. Both paths clamp at
    ``cfg.r_max`` so a zero ceiling degenerates cleanly to single-pixel
    supervision.
    """
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    if rcs_dbsm is not None:
        r = (
            cfg.k
            * math.sqrt(intrinsics.fx * intrinsics.fy)
            / (stride * depth)
            * 10.0 ** (rcs_dbsm / 20.0)
        )
        return min(cfg.r_max, r)
    if cfg.fixed_r is None:
        raise ValueError("point has no RCS and no fixed_r is configured")
    return min(cfg.r_max, cfg.fixed_r)


@dataclass(frozen=True)
class TargetBuildResult:
    targets: tuple[DepthTarget, ...]
    num_input: int
    num_dropped: int


def build_depth_targets(
    points: list[RadarPoint] | tuple[RadarPoint, ...],
    calib: SensorCalibration,
    stride: int,
    cfg: RadiusConfig,
) -> TargetBuildResult:
    """Project radar points onto the stride-``s`` feature grid.

    Points behind the camera or landing outside the feature map are dropped
    (the drop count is reported). Multiple points on the same pixel each keep
    their own target; every measured depth is its own ground truth.
    """
    if stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    width_s = calib.image_width // stride
    height_s = calib.image_height // stride
    targets: list[DepthTarget] = []
    dropped = 0
    for point in points:
        cam = calib.radar_to_camera.apply((point.x, point.y, point.z))
        try:
            u, v, depth = project_to_pixel(cam, calib.intrinsics)
        except BehindCameraError:
            dropped += 1
            continue
        us = int(math.floor(u / stride))
        vs = int(math.floor(v / stride))
        if not (0 <= us < width_s and 0 <= vs < height_s):
            dropped += 1
            continue
        radius = neighborhood_radius(depth, calib.intrinsics, stride, cfg, point.rcs_dbsm)
        targets.append(DepthTarget(us, vs, depth, radius))
    return TargetBuildResult(tuple(targets), len(points), dropped)


def nearest_bin(d: float, spec: DepthBinSpec) -> int:
    """Index of the bin whose midpoint is nearest to ``d``; out-of-range clamps."""
    if not math.isfinite(d):
        raise ValueError(f"depth must be finite, got {d}")
    idx = int(math.floor((d - spec.d_min) / spec.bin_width))
    return min(max(idx, 0), spec.num_bins - 1)


def expected_depth(dist: np.ndarray, spec: DepthBinSpec) -> float:
    """Expectation of a depth distribution over the bin midpoints."""
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (spec.num_bins,):
        raise ValueError(f"distribution shape {dist.shape} != ({spec.num_bins},)")
    total = float(np.sum(dist))
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"distribution sums to {total}, outside 1 +- {NORMALIZATION_TOL}")
    return float(spec.midpoints() @ dist)


def pixel_depth_loss(dist: np.ndarray, d_gt: float, spec: DepthBinSpec, cfg: LossConfig) -> float:
    """Classification-plus-regression depth loss for one pixel.

    Cross entropy against the bin nearest to ``d_gt`` (out-of-range depths
    clamp to an edge bin) plus L1 between the distribution's expected depth
    and the true ``d_gt``. Probabilities are floored at 1e-12 inside the log.
    """
    dist = np.asarray(dist, dtype=np.float64)
    k = nearest_bin(d_gt, spec)
    ce = -math.log(max(float(dist[k]), LOG_PROB_FLOOR))
    expectation = float(spec.midpoints() @ dist)
    return cfg.lambda1 * ce + cfg.lambda2 * abs(expectation - d_gt)


def neighborhood_pixels(
    u: int, v: int, radius: float, width: int, height: int
) -> list[tuple[int, int]]:
    """In-bounds pixels within the closed disk of ``radius`` around (u, v).

    Returned in row-major order so index ties resolve deterministically.
    """
    r_int = int(math.floor(radius))
    r_sq = radius * radius
    pixels = []
    for dv in range(-r_int, r_int + 1):
        vv = v + dv
        if not 0 <= vv < height:
            continue
        for du in range(-r_int, r_int + 1):
            uu = u + du
            if not 0 <= uu < width:
                continue
            if du * du + dv * dv <= r_sq:
                pixels.append((uu, vv))
    return pixels


@dataclass(frozen=True)
class TargetLoss:
    """Loss of one target with the pixel the aggregation selected."""

    loss: float
    pixel: tuple[int, int]
    num_pixels: int


@dataclass(frozen=True)
class LossResult:
    total: float
    per_target: tuple[TargetLoss, ...]


def _validate_depth_map(depth_map: np.ndarray, spec: DepthBinSpec) -> np.ndarray:
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if depth_map.ndim != 3 or depth_map.shape[0] != spec.num_bins:
        raise ValueError(
            f"depth map must be ({spec.num_bins}, H, W), got shape {depth_map.shape}"
        )
    sums = depth_map.sum(axis=0)
    if sums.size and np.max(np.abs(sums - 1.0)) > NORMALIZATION_TOL:
        raise ValueError("per-pixel depth distributions are not normalized")
    return depth_map


def _target_pixels(
    target: DepthTarget, cfg: LossConfig, width: int, height: int
) -> list[tuple[int, int]]:
    if cfg.strategy == "one-to-one":
        return [(target.u, target.v)]
    return neighborhood_pixels(target.u, target.v, target.radius, width, height)


def _pixel_losses(
    depth_map: np.ndarray,
    pixels: list[tuple[int, int]],
    d_gt: float,
    midpoints: np.ndarray,
    spec: DepthBinSpec,
    cfg: LossConfig,
) -> np.ndarray:
    us = np.fromiter((p[0] for p in pixels), dtype=np.intp, count=len(pixels))
    vs = np.fromiter((p[1] for p in pixels), dtype=np.intp, count=len(pixels))
    dists = depth_map[:, vs, us]
    k = nearest_bin(d_gt, spec)
    ce = -np.log(np.maximum(dists[k], LOG_PROB_FLOOR))
    expectation = midpoints @ dists
    return cfg.lambda1 * ce + cfg.lambda2 * np.abs(expectation - d_gt)


def target_pixel_losses(
    depth_map: np.ndarray, target: DepthTarget, spec: DepthBinSpec, cfg: LossConfig
) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Per-pixel losses over one target's neighborhood, in row-major order.

    Diagnostic helper; assumes the map is already normalized.
    """
    depth_map = np.asarray(depth_map, dtype=np.float64)
    _, height, width = depth_map.shape
    pixels = _target_pixels(target, cfg, width, height)
    losses = _pixel_losses(depth_map, pixels, target.d_gt, spec.midpoints(), spec, cfg)
    return pixels, losses


def one_to_many_loss(
    depth_map: np.ndarray,
    targets,
    spec: DepthBinSpec,
    cfg: LossConfig,
) -> LossResult:
    """Mean over targets of the aggregated neighborhood depth loss.

    For each target the per-pixel loss is evaluated on its neighborhood and
    aggregated with min (default) or max; the one-to-one strategy restricts
    the neighborhood to the target pixel itself. An empty target list yields
    a total of zero.
    """
    depth_map = _validate_depth_map(depth_map, spec)
    _, height, width = depth_map.shape
    midpoints = spec.midpoints()
    per_target = []
    for target in targets:
        pixels = _target_pixels(target, cfg, width, height)
        losses = _pixel_losses(depth_map, pixels, target.d_gt, midpoints, spec, cfg)
        # argmin/argmax return the first occurrence; pixels are in row-major
        # order, so ties break toward the smallest row-major index.
        sel = int(np.argmin(losses) if cfg.neighborhood_agg == "min" else np.argmax(losses))
        per_target.append(TargetLoss(float(losses[sel]), pixels[sel], len(pixels)))
    total = float(np.mean([t.loss for t in per_target])) if per_target else 0.0
    return LossResult(total, tuple(per_target))


def one_to_many_loss_grad(
    depth_map: np.ndarray,
    targets,
    spec: DepthBinSpec,
    cfg: LossConfig,
) -> np.ndarray:
    """Gradient of the total loss with respect to per-pixel pre-softmax logits.

    The distributions are treated as softmax outputs, so the gradient is a
    function of the probabilities alone. Aggregation routes each target's
    gradient entirely to its selected (argmin or argmax) pixel.
    """
    depth_map = _validate_depth_map(depth_map, spec)
    _, height, width = depth_map.shape
    midpoints = spec.midpoints()
    grad = np.zeros_like(depth_map)
    targets = list(targets)
    if not targets:
        return grad
    scale = 1.0 / len(targets)
    for target in targets:
        pixels = _target_pixels(target, cfg, width, height)
        losses = _pixel_losses(depth_map, pixels, target.d_gt, midpoints, spec, cfg)
        sel = int(np.argmin(losses) if cfg.neighborhood_agg == "min" else np.argmax(losses))
        u, v = pixels[sel]
        p = depth_map[:, v, u]
        k = nearest_bin(target.d_gt, spec)
        g = np.zeros_like(p)
        if p[k] > LOG_PROB_FLOOR:
            one_hot = np.zeros_like(p)
            one_hot[k] = 1.0
            g += cfg.lambda1 * (p - one_hot)
        expectation = float(midpoints @ p)
        sign = math.copysign(1.0, expectation - target.d_gt) if expectation != target.d_gt else 0.0
        g += cfg.lambda2 * sign * p * (midpoints - expectation)
        grad[:, v, u] += scale * g
    return grad


def targets_to_array(targets) -> np.ndarray:
    """Pack targets into an (N, 4) array with rows (u, v, d_gt, radius)."""
    rows = [(t.u, t.v, t.d_gt, t.radius) for t in targets]
    return np.array(rows, dtype=np.float64).reshape(len(rows), 4)


def targets_from_array(arr: np.ndarray) -> tuple[DepthTarget, ...]:
    """Unpack an (N, 4) array of (u, v, d_gt, radius) rows."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"target table must be (N, 4), got shape {arr.shape}")
    return tuple(
        DepthTarget(int(round(r[0])), int(round(r[1])), float(r[2]), float(r[3])) for r in arr
    )


def read_radar_points_csv(path: str | Path) -> list[RadarPoint]:
    """Read points from a CSV with header x,y,z[,rcs_dbsm[,doppler]].

    The RCS and Doppler columns are optional and individual cells may be
    empty, in which case the field is absent for that point.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames
        if fields is None or [f.strip() for f in fields[:3]] != ["x", "y", "z"]:
            raise ValueError(f"{path}: expected a header starting with x,y,z")
        extra = {f.strip() for f in fields[3:]}
        if not extra <= {"rcs_dbsm", "doppler"}:
            raise ValueError(f"{path}: unexpected columns {sorted(extra - {'rcs_dbsm', 'doppler'})}")
        points = []
        for row in reader:
            def opt(name: str) -> float | None:
                value = row.get(name)
                return float(value) if value not in (None, "") else None

            points.append(
                RadarPoint(
                    float(row["x"]),
                    float(row["y"]),
                    float(row["z"]),
                    rcs_dbsm=opt("rcs_dbsm"),
                    doppler=opt("doppler"),
                )
            )
    return points
