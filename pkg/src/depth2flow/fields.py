"""
Dense field types and the sampling primitives every warp is built on.

Pixel convention: coordinates are zero-indexed pixel centers, so the pixel
stored at row i, column j sits at (x=j, y=i). Invalid pixels always store 0.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import Depth2FlowError, DimensionMismatchError

logger = logging.getLogger(__name__)

# coordinates beyond this are treated as out of bounds before any int cast
_COORD_LIMIT = 1e9


def _readonly(array, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PixelGrid:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise Depth2FlowError(f"grid must be non-empty, got {self.width}x{self.height}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (xs, ys) float arrays of pixel-center coordinates, shape (H, W)"""
        ys, xs = np.mgrid[0 : self.height, 0 : self.width]
        return xs.astype(np.float64), ys.astype(np.float64)


@dataclass(frozen=True)
class Image:
    """Intensities in [0, 1], stored (H, W, C) with C in {1, 3}"""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3) or data.size == 0:
            raise Depth2FlowError(f"image must be (H, W) or (H, W, 1|3), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise Depth2FlowError("image intensities must be finite")
        if data.min() < -1e-6 or data.max() > 1 + 1e-6:
            raise Depth2FlowError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(np.clip(data, 0.0, 1.0), np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.width, self.height)


@dataclass(frozen=True)
class ScalarField:
    """Depth (meters) or disparity (pixels) with a validity mask"""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.size == 0:
            raise Depth2FlowError(f"scalar field must be a non-empty 2-D array, got {values.shape}")
        if valid.shape != values.shape:
            raise DimensionMismatchError("values/valid", values.shape, valid.shape)
        valid = valid & np.isfinite(values)
        object.__setattr__(self, "values", _readonly(np.where(valid, values, 0.0), np.float64))
        object.__setattr__(self, "valid", _readonly(valid, bool))

    @classmethod
    def from_array(cls, values, valid=None, positive: bool = False) -> "ScalarField":
        """Build a field, marking non-finite (and, for depth, non-positive) entries invalid"""
        values = np.asarray(values, dtype=np.float64)
        mask = np.isfinite(values) if valid is None else np.asarray(valid, dtype=bool) & np.isfinite(values)
        if positive:
            with np.errstate(invalid="ignore"):
                mask = mask & (values > 0)
        return cls(values, mask)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.width, self.height)

    def masked(self, mask: np.ndarray) -> "ScalarField":
        return ScalarField(self.values, self.valid & mask)

    def median(self) -> float:
        if not self.valid.any():
            raise Depth2FlowError("field has no valid pixels")
        return float(np.median(self.values[self.valid]))


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement (u, v) in pixels with a validity mask"""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if u.ndim != 2 or u.size == 0:
            raise Depth2FlowError(f"flow must be a non-empty 2-D field, got {u.shape}")
        if v.shape != u.shape or valid.shape != u.shape:
            raise DimensionMismatchError("u/v/valid", u.shape, v.shape)
        valid = valid & np.isfinite(u) & np.isfinite(v)
        object.__setattr__(self, "u", _readonly(np.where(valid, u, 0.0), np.float64))
        object.__setattr__(self, "v", _readonly(np.where(valid, v, 0.0), np.float64))
        object.__setattr__(self, "valid", _readonly(valid, bool))

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls.constant(width, height, 0.0, 0.0)

    @classmethod
    def constant(cls, width: int, height: int, u: float, v: float) -> "FlowField":
        shape = (height, width)
        return cls(np.full(shape, u), np.full(shape, v), np.ones(shape, dtype=bool))

    @classmethod
    def from_stack(cls, uv: np.ndarray, valid=None) -> "FlowField":
        """Build from an (H, W, 2) array"""
        uv = np.asarray(uv, dtype=np.float64)
        if valid is None:
            valid = np.ones(uv.shape[:2], dtype=bool)
        return cls(uv[..., 0], uv[..., 1], valid)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.width, self.height)

    def stack(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=-1)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def valid_fraction(self) -> float:
        return float(self.valid.mean())

    def masked(self, mask: np.ndarray) -> "FlowField":
        return FlowField(self.u, self.v, self.valid & mask)

    def max_abs(self) -> float:
        if not self.valid.any():
            return 0.0
        return float(max(np.abs(self.u[self.valid]).max(), np.abs(self.v[self.valid]).max()))

    def out_of_bounds(self) -> np.ndarray:
        """Valid pixels displaced by more than twice the image extent"""
        return self.valid & (
            (np.abs(self.u) > 2 * self.width) | (np.abs(self.v) > 2 * self.height)
        )

    def bounded(self) -> "FlowField":
        return self.masked(~self.out_of_bounds())

    def check_sanity(self) -> None:
        too_far = self.out_of_bounds()
        if too_far.any():
            raise Depth2FlowError(
                f"flow exceeds sanity bound at {int(too_far.sum())} pixels"
            )


class AugLabel(enum.Enum):
    """Coarse augmentation class; member order is the classifier's logit order"""

    FLIP = "flip"
    ROTATE = "rotate"
    SHEAR = "shear"
    NONE = "none"

    @property
    def index(self) -> int:
        return list(AugLabel).index(self)


@dataclass(frozen=True)
class SampleTuple:
    """One supervised training sample: source, target and ground-truth flow"""

    source: Image
    target: Image
    flow: FlowField
    label: AugLabel = AugLabel.NONE
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        shapes = {
            (self.source.height, self.source.width),
            (self.target.height, self.target.width),
            (self.flow.height, self.flow.width),
        }
        if len(shapes) != 1:
            raise DimensionMismatchError(
                "source/target/flow",
                (self.source.height, self.source.width),
                (self.flow.height, self.flow.width),
            )

    @property
    def mask(self) -> np.ndarray:
        return self.flow.valid


Field = Union[FlowField, ScalarField, Image]


def _channels_of(f: Field) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(f, FlowField):
        return np.stack([f.u, f.v], axis=-1), f.valid
    if isinstance(f, ScalarField):
        return f.values[:, :, None], f.valid
    if isinstance(f, Image):
        return f.data, np.ones(f.data.shape[:2], dtype=bool)
    raise TypeError(f"cannot sample {type(f).__name__}")


def sample_array(data: np.ndarray, valid: np.ndarray, x, y) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear lookup in an (H, W, C) array at real coordinates.

    Neighbors carrying zero interpolation weight are not consulted, so
    exact pixel centers (including the last row and column) sample cleanly.
    Returns (values (..., C), ok); values are 0 wherever ok is False.
    """
    h, w = valid.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    finite = np.isfinite(x) & np.isfinite(y) & (np.abs(x) < _COORD_LIMIT) & (np.abs(y) < _COORD_LIMIT)
    x = np.where(finite, x, 0.0)
    y = np.where(finite, y, 0.0)

    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros(x.shape + (data.shape[2],), dtype=np.float64)
    ok = finite.copy()
    for dx, dy, weight in (
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xc = np.clip(xi, 0, w - 1)
        yc = np.clip(yi, 0, h - 1)
        ok &= (weight == 0) | (inside & valid[yc, xc])
        out += weight[..., None] * data[yc, xc]
    out[~ok] = 0.0
    return out, ok


def bilinear_sample(f: Field, x, y) -> Tuple[np.ndarray, np.ndarray]:
    """Sample a flow, scalar field or image at (x, y).

    Scalars and arrays are both accepted. The value has a trailing channel
    axis (2 for flows, 1 for scalar fields, C for images).
    """
    data, valid = _channels_of(f)
    return sample_array(data, valid, x, y)


def _check_same_grid(what: str, a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(what, (a.height, a.width), (b.height, b.width))


def backward_sample(alpha: FlowField, beta: FlowField) -> FlowField:
    """W^-1(alpha, beta): beta looked up at x + alpha(x)"""
    _check_same_grid("alpha/beta", alpha, beta)
    xs, ys = alpha.grid.coords()
    values, ok = bilinear_sample(beta, xs + alpha.u, ys + alpha.v)
    return FlowField(values[..., 0], values[..., 1], alpha.valid & ok)


def compose_flows(f_first: FlowField, f_second: FlowField) -> FlowField:
    """Chain two flows: f_first followed by f_second from where it lands"""
    _check_same_grid("f_first/f_second", f_first, f_second)
    looked_up = backward_sample(f_first, f_second)
    return FlowField(
        f_first.u + looked_up.u,
        f_first.v + looked_up.v,
        looked_up.valid,
    )
