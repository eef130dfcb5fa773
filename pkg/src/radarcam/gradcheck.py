"""Finite-difference validation of the analytic depth-loss gradient.

The analytic gradient is exact wherever the loss is differentiable; the
neighborhood min/max and the L1 term introduce kinks, so random instances
are resampled until every target's selected pixel wins by a clear margin
and no expectation sits on the L1 corner. Central differences then have to
agree with the analytic gradient to the requested relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth_supervision import (
    DepthBinSpec,
    DepthTarget,
    LossConfig,
    one_to_many_loss,
    one_to_many_loss_grad,
    target_pixel_losses,
)
from .tensor_ops import softmax

SELECTION_MARGIN = 1e-3


@dataclass(frozen=True)
class GradCheckInstance:
    logits: np.ndarray
    targets: tuple[DepthTarget, ...]
    spec: DepthBinSpec
    cfg: LossConfig


def _is_well_separated(depth_map: np.ndarray, inst: GradCheckInstance) -> bool:
    """Reject instances whose argmin/argmax or L1 terms sit near a kink."""
    result = one_to_many_loss(depth_map, inst.targets, inst.spec, inst.cfg)
    midpoints = inst.spec.midpoints()
    for target, per in zip(inst.targets, result.per_target):
        u, v = per.pixel
        expectation = float(midpoints @ depth_map[:, v, u])
        if abs(expectation - target.d_gt) < SELECTION_MARGIN:
            return False
        if per.num_pixels > 1:
            _, losses = target_pixel_losses(depth_map, target, inst.spec, inst.cfg)
            losses = np.sort(losses)
            gap = losses[1] - losses[0] if inst.cfg.neighborhood_agg == "min" else losses[-1] - losses[-2]
            if gap < SELECTION_MARGIN:
                return False
    return True


def random_instance(rng: np.random.Generator, max_bins: int = 16, max_size: int = 12) -> GradCheckInstance:
    """A random loss instance with well-separated selections."""
    while True:
        num_bins = int(rng.integers(4, max_bins + 1))
        height = int(rng.integers(3, max_size + 1))
        width = int(rng.integers(3, max_size + 1))
        spec = DepthBinSpec(0.0, float(num_bins), num_bins)
        logits = rng.normal(0.0, 1.0, size=(num_bins, height, width))
        n_targets = int(rng.integers(1, 4))
        targets = tuple(
            DepthTarget(
                int(rng.integers(0, width)),
                int(rng.integers(0, height)),
                float(rng.uniform(0.0, num_bins)),
                float(rng.uniform(0.0, 2.5)),
            )
            for _ in range(n_targets)
        )
        cfg = LossConfig(
            neighborhood_agg=("min" if rng.uniform() < 0.7 else "max"),
            strategy=("one-to-many" if rng.uniform() < 0.8 else "one-to-one"),
        )
        inst = GradCheckInstance(logits, targets, spec, cfg)
        if _is_well_separated(softmax(logits, axis=0), inst):
            return inst


def finite_difference_grad(inst: GradCheckInstance, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of the total loss over pre-softmax logits."""

    def loss_at(logits: np.ndarray) -> float:
        depth_map = softmax(logits, axis=0)
        return one_to_many_loss(depth_map, inst.targets, inst.spec, inst.cfg).total

    grad = np.zeros_like(inst.logits)
    flat = grad.reshape(-1)
    base = inst.logits.reshape(-1)
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + step
        up = loss_at(bumped.reshape(inst.logits.shape))
        bumped[i] = base[i] - step
        down = loss_at(bumped.reshape(inst.logits.shape))
        flat[i] = (up - down) / (2.0 * step)
    return grad


def analytic_grad(inst: GradCheckInstance) -> np.ndarray:
    depth_map = softmax(inst.logits, axis=0)
    return one_to_many_loss_grad(depth_map, inst.targets, inst.spec, inst.cfg)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm deviation relative to the max-norm of the numeric gradient."""
    scale = max(float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def run_grad_check(
    instances: int = 100,
    seed: int = 0,
    step: float = 1e-4,
    max_bins: int = 16,
    max_size: int = 12,
) -> float:
    """Worst relative error between analytic and numeric gradients."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        inst = random_instance(rng, max_bins=max_bins, max_size=max_size)
        err = relative_error(analytic_grad(inst), finite_difference_grad(inst, step))
        worst = max(worst, err)
    return worst
