"""
File codecs for flows, depth maps and images, plus the flow color wheel.

All writers go through ``write_atomic`` so a crashed run never leaves a
half-written file behind under its final name.
"""

import logging
import os
import re
from pathlib import Path
from typing import Union

import cv2
import numpy as np

from .errors import CodecError
from .fields import FlowField, Image, ScalarField

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLO_TAG = 202021.25
# .flo has no mask channel; invalid pixels are stored as this and read back invalid
FLO_INVALID = 1e10
FLO_INVALID_THRESHOLD = 1e9
_FLO_MAX_PIXELS = 1 << 28

KITTI_SCALE = 64.0
KITTI_OFFSET = 2.0 ** 15
KITTI_LIMIT = 512.0

FLOW_SUFFIXES = {"flo": ".flo", "kitti-png": ".png"}


def write_atomic(path: PathLike, payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
    return path


def _read_bytes(path: PathLike) -> bytes:
    # FileNotFoundError passes through; generation treats it as a skip
    return Path(path).read_bytes()


def _encode_png(array: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", array)
    if not ok:
        raise CodecError("malformed image: PNG encoding failed")
    return buf.tobytes()


def _imread(path: PathLike, flags: int) -> np.ndarray:
    if not Path(path).exists():
        raise FileNotFoundError(str(path))
    data = cv2.imread(str(path), flags)
    if data is None:
        raise CodecError(f"malformed image: {path}")
    return data


# --- Middlebury .flo ---


def encode_flo(flow: FlowField) -> bytes:
    uv = np.where(flow.valid[..., None], flow.stack(), FLO_INVALID)
    header = np.array([FLO_TAG], dtype="<f4").tobytes()
    header += np.array([flow.width, flow.height], dtype="<i4").tobytes()
    return header + uv.astype("<f4").tobytes()


def decode_flo(payload: bytes) -> FlowField:
    if len(payload) < 12:
        raise CodecError("truncated file: missing .flo header")
    tag = np.frombuffer(payload[:4], dtype="<f4")[0]
    if tag != np.float32(FLO_TAG):
        raise CodecError("bad magic")
    width, height = (int(x) for x in np.frombuffer(payload[4:12], dtype="<i4"))
    if width <= 0 or height <= 0 or width * height > _FLO_MAX_PIXELS:
        raise CodecError(f"dimension overflow: {width}x{height}")
    expected = 12 + 8 * width * height
    if len(payload) < expected:
        raise CodecError(f"truncated file: {len(payload)} of {expected} bytes")
    uv = np.frombuffer(payload[12:expected], dtype="<f4").reshape(height, width, 2).astype(np.float64)
    with np.errstate(invalid="ignore"):
        valid = np.all(np.isfinite(uv) & (np.abs(uv) <= FLO_INVALID_THRESHOLD), axis=-1)
    return FlowField.from_stack(np.where(valid[..., None], uv, 0.0), valid)


def write_flo(path: PathLike, flow: FlowField) -> Path:
    return write_atomic(path, encode_flo(flow))


def read_flo(path: PathLike) -> FlowField:
    return decode_flo(_read_bytes(path))


# --- KITTI 16-bit PNG ---


def encode_kitti_png(flow: FlowField) -> bytes:
    if flow.max_abs() >= KITTI_LIMIT:
        raise CodecError(f"out-of-range flow: |flow| {flow.max_abs():.1f} >= {KITTI_LIMIT:.0f}")
    channels = np.stack(
        [
            np.round(flow.u * KITTI_SCALE + KITTI_OFFSET),
            np.round(flow.v * KITTI_SCALE + KITTI_OFFSET),
            flow.valid.astype(np.float64),
        ],
        axis=-1,
    )
    # cv2 stores BGR
    return _encode_png(channels.astype(np.uint16)[..., ::-1])


def write_kitti_png(path: PathLike, flow: FlowField) -> Path:
    return write_atomic(path, encode_kitti_png(flow))


def read_kitti_png(path: PathLike) -> FlowField:
    raw = _imread(path, cv2.IMREAD_ANYDEPTH | cv2.IMREAD_COLOR)
    if raw.dtype != np.uint16:
        raise CodecError(f"unsupported bit depth: {raw.dtype} in {path}")
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise CodecError(f"malformed image: expected 3 channels in {path}")
    rgb = raw[..., ::-1].astype(np.float64)
    uv = (rgb[..., :2] - KITTI_OFFSET) / KITTI_SCALE
    return FlowField.from_stack(uv, rgb[..., 2] > 0)


def read_flow(path: PathLike) -> FlowField:
    """Dispatch on suffix: .flo or KITTI .png"""
    suffix = Path(path).suffix.lower()
    if suffix == ".flo":
        return read_flo(path)
    if suffix == ".png":
        return read_kitti_png(path)
    raise CodecError(f"unknown flow format: {path}")


def write_flow(path: PathLike, flow: FlowField, output_format: str = "flo") -> Path:
    if output_format == "flo":
        return write_flo(path, flow)
    if output_format == "kitti-png":
        return write_kitti_png(path, flow)
    raise CodecError(f"unknown flow format: {output_format}")


# --- depth / disparity maps ---


def read_depth_png(path: PathLike, scale: float) -> ScalarField:
    """16-bit PNG: value / scale, with 0 marking an invalid pixel"""
    if not scale > 0:
        raise CodecError(f"depth scale must be positive, got {scale}")
    raw = _imread(path, cv2.IMREAD_ANYDEPTH)
    if raw.dtype != np.uint16:
        raise CodecError(f"unsupported bit depth: {raw.dtype} in {path}")
    if raw.ndim != 2:
        raise CodecError(f"malformed image: depth map {path} has {raw.shape[2]} channels")
    return ScalarField(raw.astype(np.float64) / scale, raw > 0)


def encode_depth_png(depth: ScalarField, scale: float) -> bytes:
    raw = np.round(np.where(depth.valid, depth.values, 0.0) * scale)
    if raw.max() > np.iinfo(np.uint16).max:
        raise CodecError("out-of-range depth for a 16-bit PNG")
    return _encode_png(raw.astype(np.uint16))


_PFM_HEADER = re.compile(rb"^(P[fF])\s+(\d+)\s+(\d+)\s+(\S+)\s")


def decode_pfm(payload: bytes) -> ScalarField:
    match = _PFM_HEADER.match(payload)
    if match is None:
        raise CodecError("malformed header: not a PFM file")
    kind, width, height, scale = match.groups()
    if kind != b"Pf":
        raise CodecError("unsupported bit depth: color PFM where a single channel is required")
    width, height = int(width), int(height)
    try:
        scale = float(scale)
    except ValueError:
        raise CodecError(f"malformed header: scale {scale!r}") from None
    if width <= 0 or height <= 0 or scale == 0:
        raise CodecError(f"malformed header: {width}x{height}, scale {scale}")

    start = match.end()
    expected = 4 * width * height
    if len(payload) - start < expected:
        raise CodecError(f"truncated file: {len(payload) - start} of {expected} payload bytes")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload[start : start + expected], dtype=dtype).reshape(height, width)
    # PFM rows run bottom to top
    return ScalarField.from_array(np.flipud(data).astype(np.float64), positive=True)


def encode_pfm(field: ScalarField) -> bytes:
    header = f"Pf\n{field.width} {field.height}\n-1.0\n".encode("ascii")
    data = np.where(field.valid, field.values, 0.0)
    return header + np.flipud(data).astype("<f4").tobytes()


def read_pfm(path: PathLike) -> ScalarField:
    return decode_pfm(_read_bytes(path))


def write_pfm(path: PathLike, field: ScalarField) -> Path:
    return write_atomic(path, encode_pfm(field))


def read_scalar_map(path: PathLike, scale: float = 1.0) -> ScalarField:
    """Depth or disparity from .png (16-bit) or .pfm, divided by ``scale``"""
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        return read_depth_png(path, scale)
    if suffix == ".pfm":
        if not scale > 0:
            raise CodecError(f"depth scale must be positive, got {scale}")
        field = read_pfm(path)
        return ScalarField(field.values / scale, field.valid)
    raise CodecError(f"unknown depth format: {path}")


# --- 8-bit images ---


def read_image(path: PathLike) -> Image:
    raw = _imread(path, cv2.IMREAD_UNCHANGED)
    if raw.dtype == np.uint8:
        data = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        data = raw.astype(np.float64) / 65535.0
    else:
        raise CodecError(f"unsupported bit depth: {raw.dtype} in {path}")
    if data.ndim == 3:
        if data.shape[2] == 4:
            data = data[..., :3]
        if data.shape[2] == 3:
            data = data[..., ::-1]
        elif data.shape[2] != 1:
            raise CodecError(f"malformed image: {data.shape[2]} channels in {path}")
    return Image(data)


def encode_image(image: Image) -> bytes:
    data = np.round(image.data * 255.0).astype(np.uint8)
    if image.channels == 3:
        data = data[..., ::-1]
    else:
        data = data[..., 0]
    return _encode_png(np.ascontiguousarray(data))


def write_image(path: PathLike, image: Image) -> Path:
    return write_atomic(path, encode_image(image))


def write_mask(path: PathLike, mask: np.ndarray) -> Path:
    return write_atomic(path, _encode_png(np.where(mask, 255, 0).astype(np.uint8)))


def read_mask(path: PathLike) -> np.ndarray:
    return _imread(path, cv2.IMREAD_GRAYSCALE) > 0


# --- visualization ---


def visualize_flow(flow: FlowField) -> Image:
    """
    Color-wheel rendering: hue is the flow direction, saturation the magnitude
    relative to the 99th percentile of valid magnitudes. Invalid pixels are black.
    """
    magnitude = flow.magnitude()
    scale = float(np.percentile(magnitude[flow.valid], 99)) if flow.valid.any() else 0.0
    saturation = np.clip(magnitude / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(magnitude)
    hue = np.degrees(np.mod(np.arctan2(flow.v, flow.u), 2 * np.pi))

    hsv = np.stack([hue, saturation, flow.valid.astype(np.float64)], axis=-1).astype(np.float32)
    rgb = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return Image(np.clip(rgb.astype(np.float64), 0.0, 1.0))


def summarize_flow(flow: FlowField) -> dict:
    magnitude = flow.magnitude()[flow.valid]
    return {
        "width": flow.width,
        "height": flow.height,
        "valid_fraction": flow.valid_fraction(),
        "mean_magnitude": float(magnitude.mean()) if magnitude.size else 0.0,
        "max_magnitude": float(magnitude.max()) if magnitude.size else 0.0,
    }
