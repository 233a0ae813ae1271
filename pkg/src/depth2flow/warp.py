"""
Depth-aware forward splatting and backward image warping.

forward_splat moves every valid source pixel to x + flow(x), spreading it
over the four surrounding target pixels with bilinear weights. A per-target
depth buffer keeps the nearest surface: contributions more than
``depth_tolerance`` (relative) behind the nearest one are dropped and the
target pixel is flagged occluded. Target pixels nobody lands on are holes.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionMismatchError, EmptyWarpError
from .fields import FlowField, Image, ScalarField, bilinear_sample

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_TOLERANCE = 0.05

# bilinear weights at or below this do not count as a contribution
_MIN_WEIGHT = 1e-9


@dataclass(frozen=True)
class WarpResult:
    image: Image
    depth: Optional[ScalarField]
    valid: np.ndarray
    occluded: np.ndarray
    holes: np.ndarray


def _require_same_grid(what: str, a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(what, (a.height, a.width), (b.height, b.width))


def _splat_targets(tx: np.ndarray, ty: np.ndarray, width: int, height: int):
    """Yield (keep, flat_target, weight) for the four bilinear neighbors"""
    x0 = np.floor(tx)
    y0 = np.floor(ty)
    fx = tx - x0
    fy = ty - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    for dx, dy, weight in (
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        keep = (weight > _MIN_WEIGHT) & (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        yield keep, yi[keep] * width + xi[keep], weight[keep]


def forward_splat(
    source: Image,
    source_depth: ScalarField,
    flow: FlowField,
    target_depth: Optional[ScalarField] = None,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
) -> WarpResult:
    """
    Splat ``source`` along ``flow`` into the target view.

    Args:
        source: image to move
        source_depth: depth of each source pixel; only pixels valid here and in
            ``flow`` are splatted
        flow: per-pixel displacement from source to target
        target_depth: depth of each source point as seen from the target view,
            used for the depth buffer and the returned depth. Defaults to
            ``source_depth`` (pure image-plane shifts such as disparity warps).
        depth_tolerance: relative depth band treated as the same surface
    """
    _require_same_grid("source/flow", source, flow)
    _require_same_grid("source/source_depth", source, source_depth)
    if target_depth is None:
        target_depth = source_depth
    _require_same_grid("source/target_depth", source, target_depth)

    h, w = flow.height, flow.width
    movable = flow.valid & source_depth.valid & target_depth.valid
    if not movable.any():
        raise EmptyWarpError()

    ys, xs = np.nonzero(movable)
    z = target_depth.values[ys, xs]
    colors = source.data[ys, xs]

    # neighbor-major, then row-major source order: fixed for a given input
    targets, weights, depths, values = [], [], [], []
    for keep, flat, weight in _splat_targets(xs + flow.u[ys, xs], ys + flow.v[ys, xs], w, h):
        targets.append(flat)
        weights.append(weight)
        depths.append(z[keep])
        values.append(colors[keep])
    target = np.concatenate(targets)
    weight = np.concatenate(weights)
    depth = np.concatenate(depths)
    value = np.concatenate(values)
    if target.size == 0:
        raise EmptyWarpError("empty warp: every splat landed outside the target")

    n = h * w
    nearest = np.full(n, np.inf)
    np.minimum.at(nearest, target, depth)
    accepted = depth <= nearest[target] * (1.0 + depth_tolerance)

    kept_target = target[accepted]
    kept_weight = weight[accepted]
    weight_sum = np.bincount(kept_target, weights=kept_weight, minlength=n)
    depth_sum = np.bincount(kept_target, weights=kept_weight * depth[accepted], minlength=n)
    color_sum = np.stack(
        [
            np.bincount(kept_target, weights=kept_weight * value[accepted, c], minlength=n)
            for c in range(source.channels)
        ],
        axis=-1,
    )
    rejected = np.bincount(target[~accepted], minlength=n) > 0

    covered = weight_sum > 0
    safe = np.where(covered, weight_sum, 1.0)
    image = np.where(covered[:, None], color_sum / safe[:, None], 0.0)
    splatted_depth = np.where(covered, depth_sum / safe, 0.0)

    holes = ~covered.reshape(h, w)
    occluded = rejected.reshape(h, w) & ~holes
    logger.debug(
        "forward_splat %dx%d: %d holes, %d occluded", w, h, int(holes.sum()), int(occluded.sum())
    )
    return WarpResult(
        image=Image(np.clip(image.reshape(h, w, source.channels), 0.0, 1.0)),
        depth=ScalarField(splatted_depth.reshape(h, w), ~holes),
        valid=~holes,
        occluded=occluded,
        holes=holes,
    )


def backward_warp_image(target_coords_flow: FlowField, source: Image) -> Tuple[Image, np.ndarray]:
    """Gather ``source`` at x + flow(x); returns the image and its validity mask"""
    _require_same_grid("flow/source", target_coords_flow, source)
    xs, ys = target_coords_flow.grid.coords()
    values, ok = bilinear_sample(source, xs + target_coords_flow.u, ys + target_coords_flow.v)
    mask = ok & target_coords_flow.valid
    values[~mask] = 0.0
    return Image(np.clip(values, 0.0, 1.0)), mask


def visibility_mask(
    flow: FlowField,
    target_depth: ScalarField,
    warped: WarpResult,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
) -> np.ndarray:
    """
    Source pixels whose splat is actually seen in the target view.

    A pixel counts when its flow is valid, the four target pixels around its
    landing point are all covered, and its own depth there is within the
    depth-buffer tolerance of the splatted depth.
    """
    xs, ys = flow.grid.coords()
    landed, ok = bilinear_sample(warped.depth, xs + flow.u, ys + flow.v)
    own = target_depth.values
    with np.errstate(invalid="ignore"):
        in_front = own <= landed[..., 0] * (1.0 + depth_tolerance)
    return flow.valid & target_depth.valid & ok & in_front


def photometric_error(sample_source: Image, sample_target: Image, flow: FlowField) -> float:
    """Mean |I_s - I_t(x + F)| over pixels valid in ``flow``"""
    warped, mask = backward_warp_image(flow, sample_target)
    if not mask.any():
        return float("nan")
    diff = np.abs(sample_source.data - warped.data)[mask]
    return float(diff.mean())
