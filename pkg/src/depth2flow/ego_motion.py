"""
Virtual camera motion: flow from a rigid transform of the back-projected
depth map, the novel view it induces, and the three tuples built from a
stereo pair (0->1, 1->2, 0->2).
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .depth_unify import StereoPair
from .errors import ConfigError, DegenerateCameraError, DegenerateMotionError
from .fields import FlowField, SampleTuple, ScalarField, compose_flows
from .warp import DEFAULT_DEPTH_TOLERANCE, forward_splat, visibility_mask

logger = logging.getLogger(__name__)

# transformed depths at or below this are behind the camera
_MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        values = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(values)):
            raise DegenerateCameraError(f"camera parameters must be finite, got {values}")
        if self.fx <= 0 or self.fy <= 0:
            raise DegenerateCameraError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @classmethod
    def default(cls, width: int, height: int) -> "CameraModel":
        """Pinhole prior: f = 0.58 * width, principal point at the image center"""
        focal = 0.58 * width
        return cls(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0)

    def check_image(self, width: int, height: int) -> None:
        if not (-0.5 * width <= self.cx <= 1.5 * width and -0.5 * height <= self.cy <= 1.5 * height):
            raise DegenerateCameraError(
                f"principal point ({self.cx}, {self.cy}) is far outside a {width}x{height} image"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidMotion:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise DegenerateMotionError("rotation must be 3x3 and translation a 3-vector")
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-9, rtol=0):
            raise DegenerateMotionError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise DegenerateMotionError("rotation is not proper (det != +1)")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_euler(cls, angles, translation) -> "RigidMotion":
        """Angles in radians about x, y, z (extrinsic xyz)"""
        return cls(Rotation.from_euler("xyz", angles).as_matrix(), translation)

    def inverse(self) -> "RigidMotion":
        return RigidMotion(self.rotation.T, -self.rotation.T @ self.translation)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }


@dataclass(frozen=True)
class MotionSamplingConfig:
    euler_range: Tuple[Tuple[float, float], ...] = ((-0.03, 0.03),) * 3
    # multiplied by the median valid depth
    translation_range: Tuple[Tuple[float, float], ...] = ((-0.02, 0.02),) * 3

    def __post_init__(self):
        for name in ("euler_range", "translation_range"):
            ranges = getattr(self, name)
            if len(ranges) != 3:
                raise ConfigError(f"{name} needs one interval per axis")
            for lo, hi in ranges:
                if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                    raise ConfigError(f"{name} interval ({lo}, {hi}) is invalid")


def sample_motion(
    cfg: MotionSamplingConfig, depth: ScalarField, rng: np.random.Generator
) -> RigidMotion:
    scale = depth.median()
    angles = [rng.uniform(lo, hi) for lo, hi in cfg.euler_range]
    translation = [rng.uniform(lo, hi) * scale for lo, hi in cfg.translation_range]
    return RigidMotion.from_euler(angles, translation)


def reproject(
    depth: ScalarField, cam: CameraModel, motion: RigidMotion
) -> Tuple[FlowField, ScalarField]:
    """
    Back-project every valid pixel, move it by ``motion`` and project it again.

    Returns the induced flow and, on the same source grid, each point's depth
    in the moved camera. Points ending at or behind the camera are invalid, and
    so are points displaced by more than twice the image extent.
    """
    cam.check_image(depth.width, depth.height)
    xs, ys = depth.grid.coords()
    z = depth.values
    points = np.stack(
        [(xs - cam.cx) / cam.fx * z, (ys - cam.cy) / cam.fy * z, z], axis=-1
    )
    moved = points @ motion.rotation.T + motion.translation
    z_new = moved[..., 2]
    in_front = depth.valid & (z_new > _MIN_DEPTH)
    if not in_front.any():
        raise DegenerateMotionError("all points behind the camera")

    safe_z = np.where(in_front, z_new, 1.0)
    x_new = cam.fx * moved[..., 0] / safe_z + cam.cx
    y_new = cam.fy * moved[..., 1] / safe_z + cam.cy
    dropped = int(depth.valid.sum() - in_front.sum())
    if dropped:
        logger.debug("reproject: %d points behind the camera", dropped)
    flow = FlowField(x_new - xs, y_new - ys, in_front)
    too_far = int(flow.out_of_bounds().sum())
    if too_far:
        logger.debug("reproject: %d points displaced beyond the flow sanity bound", too_far)
        flow = flow.bounded()
    return flow, ScalarField(z_new, flow.valid)


def egomotion_flow(depth: ScalarField, cam: CameraModel, motion: RigidMotion) -> FlowField:
    """K T Z K^-1 p - p for every valid pixel p"""
    flow, _ = reproject(depth, cam, motion)
    return flow


def synth_general_tuples(
    pair: StereoPair,
    cam: CameraModel,
    cfg: MotionSamplingConfig,
    rng: np.random.Generator,
    motion: Optional[RigidMotion] = None,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
) -> List[SampleTuple]:
    """
    Move the camera of the pair's second view and emit the three tuples
    (I0, I1, F01), (I1, I2, F12) and (I0, I2, F02).
    """
    if motion is None:
        motion = sample_motion(cfg, pair.depth_target, rng)

    base = pair.sample
    raw, moved_depth = reproject(pair.depth_target, cam, motion)
    warped = forward_splat(
        base.target, pair.depth_target, raw, target_depth=moved_depth, depth_tolerance=depth_tolerance
    )
    f12 = raw.masked(visibility_mask(raw, moved_depth, warped, depth_tolerance))
    f02 = compose_flows(base.flow, f12)

    meta = dict(base.meta)
    meta["motion"] = motion.as_dict()
    meta["camera"] = {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy}
    return [
        base,
        SampleTuple(base.target, warped.image, f12, meta=meta),
        SampleTuple(base.source, warped.image, f02, meta=meta),
    ]
