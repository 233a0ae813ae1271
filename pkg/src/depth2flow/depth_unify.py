"""
Turn monocular depth and stereo disparity samples into horizontal-flow pairs.

Monocular path: depth -> virtual disparity (d = s_c / Z) -> horizontal flow
s_i * d -> forward splat of image and depth. Stereo path: the real pair is
kept, its disparity becomes the flow and the depth of the second view is
splatted from the first.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError, Depth2FlowError, DimensionMismatchError, EmptyWarpError
from .fields import FlowField, Image, SampleTuple, ScalarField
from .warp import DEFAULT_DEPTH_TOLERANCE, forward_splat, visibility_mask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VirtualStereoConfig:
    # absolute B*f range; None derives it from image width and nearest depth
    s_c_range: Optional[Tuple[float, float]] = None
    disparity_fraction_range: Tuple[float, float] = (0.02, 0.3)
    max_disparity_fraction: float = 0.3
    side_sign: Optional[int] = None
    bf_stereo_constant: float = 100.0

    def __post_init__(self):
        if self.s_c_range is not None:
            lo, hi = self.s_c_range
            if not (0 < lo <= hi):
                raise ConfigError(f"s_c_range must satisfy 0 < min <= max, got {self.s_c_range}")
        lo, hi = self.disparity_fraction_range
        if not (0 < lo <= hi):
            raise ConfigError(
                f"disparity_fraction_range must satisfy 0 < min <= max, got {self.disparity_fraction_range}"
            )
        if self.max_disparity_fraction <= 0:
            raise ConfigError("max_disparity_fraction must be positive")
        if self.side_sign not in (None, -1, 1):
            raise ConfigError(f"side_sign must be -1, 1 or null, got {self.side_sign}")
        if self.bf_stereo_constant <= 0:
            raise ConfigError("bf_stereo_constant must be positive")


@dataclass(frozen=True)
class StereoPair:
    """A horizontal-flow tuple plus the depth of both views"""

    sample: SampleTuple
    depth_source: ScalarField
    depth_target: ScalarField
    events: Tuple[str, ...] = ()
    params: Dict[str, Any] = field(default_factory=dict)


def _check_bf(bf: float) -> None:
    if not bf > 0:
        raise Depth2FlowError(f"baseline-focal product must be positive, got {bf}")


def _reciprocal(field_in: ScalarField, bf: float, what: str) -> ScalarField:
    with np.errstate(divide="ignore", invalid="ignore"):
        usable = field_in.valid & (field_in.values > 0)
        out = np.where(usable, bf / np.where(usable, field_in.values, 1.0), 0.0)
    dropped = int(field_in.valid.sum() - usable.sum())
    if dropped:
        logger.debug("%s: %d non-positive pixels marked invalid", what, dropped)
    return ScalarField(out, usable)


def depth_to_disparity(depth: ScalarField, bf: float) -> ScalarField:
    """d = bf / Z per valid pixel"""
    _check_bf(bf)
    return _reciprocal(depth, bf, "depth_to_disparity")


def disparity_to_depth(disp: ScalarField, bf: float) -> ScalarField:
    """Z = bf / d per valid pixel; zero disparity is invalid"""
    _check_bf(bf)
    return _reciprocal(disp, bf, "disparity_to_depth")


def disparity_to_flow(disp: ScalarField, sign: int) -> FlowField:
    """<sign * d, 0>: a purely horizontal flow"""
    if sign not in (-1, 1):
        raise Depth2FlowError(f"sign must be -1 or +1, got {sign}")
    return FlowField(sign * disp.values, np.zeros_like(disp.values), disp.valid)


def sample_scale_factor(
    depth: ScalarField, cfg: VirtualStereoConfig, rng: np.random.Generator
) -> Tuple[float, bool]:
    """Draw s_c = B*f; clamp it so the largest disparity stays within bounds"""
    if not depth.valid.any():
        raise EmptyWarpError()
    nearest = float(depth.values[depth.valid].min())
    width = depth.width
    if cfg.s_c_range is not None:
        lo, hi = cfg.s_c_range
    else:
        lo = cfg.disparity_fraction_range[0] * width * nearest
        hi = cfg.disparity_fraction_range[1] * width * nearest
    s_c = float(rng.uniform(lo, hi))

    limit = cfg.max_disparity_fraction * width
    if s_c / nearest > limit:
        logger.warning(
            "virtual disparity %.2f px exceeds %.2f px, clamping s_c", s_c / nearest, limit
        )
        return limit * nearest, True
    return s_c, False


def synth_virtual_stereo(
    image: Image,
    depth: ScalarField,
    cfg: VirtualStereoConfig,
    rng: np.random.Generator,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
) -> StereoPair:
    """
    Build a virtual stereo pair from one image and its depth map.

    The returned flow is exactly s_i * F (the flow used to splat), restricted to
    source pixels that stay visible in the synthesized view.
    """
    if (image.height, image.width) != (depth.height, depth.width):
        raise DimensionMismatchError("image/depth", (image.height, image.width), (depth.height, depth.width))

    s_c, clamped = sample_scale_factor(depth, cfg, rng)
    s_i = cfg.side_sign if cfg.side_sign is not None else int(rng.choice([-1, 1]))

    flow = disparity_to_flow(depth_to_disparity(depth, s_c), s_i)
    warped = forward_splat(image, depth, flow, depth_tolerance=depth_tolerance)
    mask = visibility_mask(flow, depth, warped, depth_tolerance)

    params = {"s_c": s_c, "s_i": s_i, "clamped": clamped}
    sample = SampleTuple(image, warped.image, flow.masked(mask), meta=dict(params))
    events = ("s_c clamped",) if clamped else ()
    return StereoPair(sample, depth, warped.depth, events, params)


def ingest_stereo(
    left: Image,
    right: Image,
    disp: ScalarField,
    bf: float,
    sign: int = -1,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
) -> StereoPair:
    """
    Wrap a rectified stereo pair with ground-truth disparity as a flow tuple.

    ``sign`` maps disparity to flow from the first image to the second; a left
    image pixel moves left in the right image, hence the default -1.
    """
    shape = (left.height, left.width)
    for what, other in (("left/right", right), ("left/disparity", disp)):
        if (other.height, other.width) != shape:
            raise DimensionMismatchError(what, shape, (other.height, other.width))
    _check_bf(bf)

    depth0 = disparity_to_depth(disp, bf)
    if not depth0.valid.any():
        raise Depth2FlowError("degenerate disparity: no valid positive pixels")
    flow = disparity_to_flow(disp, sign).masked(depth0.valid)

    warped = forward_splat(left, depth0, flow, depth_tolerance=depth_tolerance)
    mask = visibility_mask(flow, depth0, warped, depth_tolerance)

    params = {"bf": bf, "sign": sign}
    sample = SampleTuple(left, right, flow.masked(mask), meta=dict(params))
    return StereoPair(sample, depth0, warped.depth, (), params)
