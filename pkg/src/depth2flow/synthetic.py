"""
Procedural scenes with known geometry, for the self-test, the demo script
and the test-suite. Textures are smooth sums of sinusoids so bilinear
resampling stays accurate.
"""

import json
from pathlib import Path
from typing import Callable, Dict, Tuple, Union

import numpy as np

from .fields import Image, ScalarField
from .flow_io import encode_depth_png, write_atomic, write_image, write_pfm

Texture = Callable[[np.ndarray, np.ndarray], np.ndarray]


def make_texture(seed: int, channels: int = 3, waves: int = 4) -> Texture:
    """Return f(x, y) -> (..., channels) intensities in [0.1, 0.9]"""
    rng = np.random.default_rng(seed)
    periods = rng.uniform(12.0, 40.0, size=(channels, waves))
    angles = rng.uniform(0.0, np.pi, size=(channels, waves))
    phases = rng.uniform(0.0, 2 * np.pi, size=(channels, waves))
    amplitude = 0.4 / waves

    def texture(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None, None]
        y = np.asarray(y, dtype=np.float64)[..., None, None]
        k = 2 * np.pi / periods
        arg = k * (np.cos(angles) * x + np.sin(angles) * y) + phases
        return 0.5 + amplitude * np.sin(arg).sum(axis=-1)

    return texture


def textured_image(width: int, height: int, seed: int = 0, channels: int = 3) -> Image:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return Image(make_texture(seed, channels)(xs, ys))


def slanted_plane_depth(width: int, height: int, near: float = 4.0, far: float = 8.0) -> ScalarField:
    """A plane receding toward the top of the image, tilted slightly left to right"""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    t = 1.0 - ys / max(height - 1, 1)
    depth = near + (far - near) * (0.8 * t + 0.2 * xs / max(width - 1, 1))
    return ScalarField(depth, np.ones((height, width), dtype=bool))


def box_on_plane_depth(width: int, height: int, near: float = 4.0, far: float = 8.0) -> ScalarField:
    """Slanted plane with a fronto-parallel box in the middle, which produces occlusions"""
    plane = slanted_plane_depth(width, height, near, far)
    values = np.array(plane.values)
    values[height // 3 : 2 * height // 3, width // 3 : 2 * width // 3] = near * 0.6
    return ScalarField(values, plane.valid)


def constant_depth(width: int, height: int, z: float) -> ScalarField:
    return ScalarField(np.full((height, width), float(z)), np.ones((height, width), dtype=bool))


def stereo_scene(
    width: int, height: int, seed: int = 0, d_top: float = 2.0, d_bottom: float = 6.0
) -> Tuple[Image, Image, ScalarField]:
    """
    Rectified pair whose disparity only varies by row, so the right view is
    exactly right(x, y) = left(x + d(y), y).
    """
    texture = make_texture(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    disparity = d_top + (d_bottom - d_top) * ys / max(height - 1, 1)
    left = Image(texture(xs, ys))
    right = Image(texture(xs + disparity, ys))
    return left, right, ScalarField(disparity, np.ones((height, width), dtype=bool))


def write_demo_dataset(
    root: Union[str, Path], width: int = 64, height: int = 48, seed: int = 0
) -> Path:
    """Write one mono and one stereo sample plus a manifest; returns the manifest path"""
    root = Path(root)
    depth_scale = 1000.0

    image = textured_image(width, height, seed)
    depth = slanted_plane_depth(width, height)
    write_image(root / "mono" / "image.png", image)
    write_atomic(root / "mono" / "depth.png", encode_depth_png(depth, depth_scale))

    left, right, disparity = stereo_scene(width, height, seed + 1)
    write_image(root / "stereo" / "left.png", left)
    write_image(root / "stereo" / "right.png", right)
    write_pfm(root / "stereo" / "disparity.pfm", disparity)

    records: Tuple[Dict[str, object], ...] = (
        {
            "sample_id": "mono-000",
            "modality": "mono",
            "image": "mono/image.png",
            "depth": "mono/depth.png",
            "depth_scale": depth_scale,
        },
        {
            "sample_id": "stereo-000",
            "modality": "stereo",
            "left": "stereo/left.png",
            "right": "stereo/right.png",
            "disparity": "stereo/disparity.pfm",
        },
    )
    manifest = root / "manifest.jsonl"
    write_atomic(manifest, ("\n".join(json.dumps(r) for r in records) + "\n").encode("utf-8"))
    return manifest
