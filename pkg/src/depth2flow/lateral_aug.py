"""
Lateral geometric augmentation: flip, rotate or shear ONE image of a tuple
and rebuild the ground-truth flow by composing it with the exact special flow
of that augmentation.

Every special flow comes as a pair (F_a, B_a): F_a moves a pixel of the
original image to where it lands in the augmented one, B_a is the inverse map.
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import AugmentationError
from .fields import (
    AugLabel,
    FlowField,
    PixelGrid,
    SampleTuple,
    ScalarField,
    bilinear_sample,
    compose_flows,
)
from .warp import backward_warp_image

logger = logging.getLogger(__name__)

SIDES = ("target", "source", "random")


class AugKind(enum.Enum):
    FLIP_H = "flip_h"
    FLIP_V = "flip_v"
    ROTATE = "rotate"
    SHEAR_H = "shear_h"
    SHEAR_V = "shear_v"
    NONE = "none"

    @property
    def label(self) -> AugLabel:
        if self in (AugKind.FLIP_H, AugKind.FLIP_V):
            return AugLabel.FLIP
        if self in (AugKind.SHEAR_H, AugKind.SHEAR_V):
            return AugLabel.SHEAR
        if self is AugKind.ROTATE:
            return AugLabel.ROTATE
        return AugLabel.NONE


@dataclass(frozen=True)
class AugRanges:
    theta_range: Tuple[float, float] = (math.radians(5.0), math.radians(25.0))
    lambda_range: Tuple[float, float] = (0.1, 0.4)
    # rotation centers are drawn from this central fraction of each axis
    center_fraction: float = 0.5

    def __post_init__(self):
        lo, hi = self.theta_range
        if not (0 <= lo <= hi < math.pi):
            raise AugmentationError(f"theta_range must satisfy 0 <= min <= max < pi, got {self.theta_range}")
        lo, hi = self.lambda_range
        if not (0 <= lo <= hi < 1):
            raise AugmentationError(f"lambda_range must satisfy 0 <= min <= max < 1, got {self.lambda_range}")
        if not (0 <= self.center_fraction <= 1):
            raise AugmentationError("center_fraction must lie in [0, 1]")

    def center_bounds(self, grid: PixelGrid) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        half = self.center_fraction / 2.0
        xs = ((grid.width - 1) * (0.5 - half), (grid.width - 1) * (0.5 + half))
        ys = ((grid.height - 1) * (0.5 - half), (grid.height - 1) * (0.5 + half))
        return xs, ys


@dataclass(frozen=True)
class AugSpec:
    kind: AugKind
    theta: float = 0.0
    lam: float = 0.0
    sign: int = 1
    center: Tuple[float, float] = (0.0, 0.0)

    @property
    def label(self) -> AugLabel:
        return self.kind.label

    def check(self, grid: PixelGrid, ranges: AugRanges) -> None:
        """Raise AugmentationError when a parameter is outside ``ranges``"""
        if self.sign not in (-1, 1):
            raise AugmentationError(f"sign must be -1 or +1, got {self.sign}")
        if self.kind is AugKind.ROTATE:
            lo, hi = ranges.theta_range
            if not lo <= self.theta <= hi:
                raise AugmentationError(f"theta {self.theta:.4f} outside [{lo:.4f}, {hi:.4f}]")
            cx, cy = self.center
            if not (0 <= cx <= grid.width - 1 and 0 <= cy <= grid.height - 1):
                raise AugmentationError(f"rotation center {self.center} outside the image")
        elif self.kind in (AugKind.SHEAR_H, AugKind.SHEAR_V):
            lo, hi = ranges.lambda_range
            if not lo <= self.lam <= hi:
                raise AugmentationError(f"lambda {self.lam:.4f} outside [{lo:.4f}, {hi:.4f}]")

    def as_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {"kind": self.kind.value}
        if self.kind is AugKind.ROTATE:
            out.update(theta=self.theta, sign=self.sign, center=list(self.center))
        elif self.kind in (AugKind.SHEAR_H, AugKind.SHEAR_V):
            out.update(lam=self.lam, sign=self.sign)
        return out


def _pair(grid: PixelGrid, fu, fv, bu, bv) -> Tuple[FlowField, FlowField]:
    valid = np.ones(grid.shape, dtype=bool)
    zeros = np.zeros(grid.shape)
    fu = zeros + fu
    fv = zeros + fv
    bu = zeros + bu
    bv = zeros + bv
    return FlowField(fu, fv, valid), FlowField(bu, bv, valid)


def flip_flow(grid: PixelGrid, horizontal: bool) -> Tuple[FlowField, FlowField]:
    """Mirror about the image center line; the flip is its own inverse"""
    xs, ys = grid.coords()
    if horizontal:
        u, v = (grid.width - 1) - 2.0 * xs, 0.0
    else:
        u, v = 0.0, (grid.height - 1) - 2.0 * ys
    return _pair(grid, u, v, u, v)


def _rotated_offset(xs, ys, angle: float, center: Tuple[float, float]):
    cx, cy = center
    dx = xs - cx
    dy = ys - cy
    c, s = math.cos(angle), math.sin(angle)
    return c * dx - s * dy + cx - xs, s * dx + c * dy + cy - ys


def rotation_flow(
    grid: PixelGrid, theta: float, sign: int, center: Tuple[float, float]
) -> Tuple[FlowField, FlowField]:
    """
    Rotate every pixel by sign * theta about ``center``.

    Args:
        grid: pixel grid of the image
        theta: rotation magnitude in radians, |theta| < pi
        sign: rotation direction, -1 or +1
        center: rotation center (x, y) in pixels
    """
    if not abs(theta) < math.pi:
        raise AugmentationError(f"|theta| must be below pi, got {theta}")
    xs, ys = grid.coords()
    fu, fv = _rotated_offset(xs, ys, sign * theta, center)
    bu, bv = _rotated_offset(xs, ys, -sign * theta, center)
    return _pair(grid, fu, fv, bu, bv)


def shear_flow(
    grid: PixelGrid, lam: float, sign: int, horizontal: bool
) -> Tuple[FlowField, FlowField]:
    """Shear about the origin; B_a uses -sign * lam so the two maps are exact inverses"""
    if not abs(lam) < 1:
        raise AugmentationError(f"|lambda| must be below 1, got {lam}")
    xs, ys = grid.coords()
    k = sign * lam
    if horizontal:
        return _pair(grid, k * ys, 0.0, -k * ys, 0.0)
    return _pair(grid, 0.0, k * xs, 0.0, -k * xs)


def special_flow(grid: PixelGrid, spec: AugSpec) -> Tuple[FlowField, FlowField]:
    if spec.kind is AugKind.FLIP_H:
        return flip_flow(grid, horizontal=True)
    if spec.kind is AugKind.FLIP_V:
        return flip_flow(grid, horizontal=False)
    if spec.kind is AugKind.ROTATE:
        return rotation_flow(grid, spec.theta, spec.sign, spec.center)
    if spec.kind is AugKind.SHEAR_H:
        return shear_flow(grid, spec.lam, spec.sign, horizontal=True)
    if spec.kind is AugKind.SHEAR_V:
        return shear_flow(grid, spec.lam, spec.sign, horizontal=False)
    zero = FlowField.zeros(grid.width, grid.height)
    return zero, zero


_KINDS_BY_LABEL = {
    AugLabel.FLIP: (AugKind.FLIP_H, AugKind.FLIP_V),
    AugLabel.ROTATE: (AugKind.ROTATE,),
    AugLabel.SHEAR: (AugKind.SHEAR_H, AugKind.SHEAR_V),
}


def sample_aug_spec(
    grid: PixelGrid,
    rng: np.random.Generator,
    ranges: AugRanges = AugRanges(),
    weights: Optional[Dict[AugLabel, float]] = None,
) -> AugSpec:
    """Draw a class by ``weights`` (uniform by default), then its parameters"""
    labels = list(_KINDS_BY_LABEL)
    if weights is None:
        p = np.full(len(labels), 1.0 / len(labels))
    else:
        p = np.array([max(0.0, float(weights.get(label, 0.0))) for label in labels])
        if p.sum() <= 0:
            raise AugmentationError("augmentation class weights sum to zero")
        p = p / p.sum()
    label = labels[int(rng.choice(len(labels), p=p))]
    choices = _KINDS_BY_LABEL[label]
    kind = choices[int(rng.integers(len(choices)))]
    sign = int(rng.choice([-1, 1]))

    if kind is AugKind.ROTATE:
        (x_lo, x_hi), (y_lo, y_hi) = ranges.center_bounds(grid)
        return AugSpec(
            kind,
            theta=float(rng.uniform(*ranges.theta_range)),
            sign=sign,
            center=(float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi))),
        )
    if kind in (AugKind.SHEAR_H, AugKind.SHEAR_V):
        return AugSpec(kind, lam=float(rng.uniform(*ranges.lambda_range)), sign=sign)
    return AugSpec(kind)


def _landing_ok(flow: FlowField, valid_image: np.ndarray) -> np.ndarray:
    """Pixels whose x + flow(x) samples only valid pixels of the other image"""
    xs, ys = flow.grid.coords()
    ones = ScalarField(np.ones(valid_image.shape), valid_image)
    _, ok = bilinear_sample(ones, xs + flow.u, ys + flow.v)
    return ok


def apply_lateral_aug(
    sample: SampleTuple,
    spec: Optional[AugSpec],
    side: str = "target",
    rng: Optional[np.random.Generator] = None,
    ranges: AugRanges = AugRanges(),
) -> SampleTuple:
    """
    Augment one image of ``sample`` and recompute its ground truth.

    Target side: I'_t(p) = I_t(p + B_a(p)) and the flow becomes F + F_a
    looked up where F lands. Source side: I'_s(p) = I_s(p + B_a(p)) and the
    flow becomes B_a + F looked up where B_a lands.

    Args:
        sample: tuple to augment
        spec: augmentation to apply; None (or kind NONE) returns the tuple
            unchanged with label NONE
        side: "target", "source" or "random" (drawn from ``rng``)
        rng: required only for side="random"
        ranges: accepted parameter ranges for ``spec``
    """
    if spec is None or spec.kind is AugKind.NONE:
        return SampleTuple(sample.source, sample.target, sample.flow, AugLabel.NONE, dict(sample.meta))
    if side not in SIDES:
        raise AugmentationError(f"side must be one of {SIDES}, got {side!r}")
    if side == "random":
        if rng is None:
            raise AugmentationError("side='random' needs an rng")
        side = "target" if rng.random() < 0.5 else "source"

    grid = sample.flow.grid
    spec.check(grid, ranges)
    forward, backward = special_flow(grid, spec)

    if side == "target":
        target, image_ok = backward_warp_image(backward, sample.target)
        source = sample.source
        flow = compose_flows(sample.flow, forward)
        flow = flow.masked(_landing_ok(flow, image_ok))
    else:
        source, image_ok = backward_warp_image(backward, sample.source)
        target = sample.target
        flow = compose_flows(backward, sample.flow).masked(image_ok)

    meta = dict(sample.meta)
    meta["augmentation"] = dict(spec.as_dict(), side=side)
    logger.debug(
        "lateral %s on %s side: %.1f%% valid", spec.kind.value, side, 100.0 * flow.valid_fraction()
    )
    return SampleTuple(source, target, flow, spec.label, meta)
