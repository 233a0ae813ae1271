"""
Analytic invariant suite: closed-form flows, cross-module consistency,
photoconsistency on a synthetic scene, codec round trips and metric oracles.
Runs in a few seconds without touching the filesystem.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from .classifier import classify
from .depth_unify import VirtualStereoConfig, synth_virtual_stereo
from .ego_motion import CameraModel, RigidMotion, egomotion_flow
from .fields import AugLabel, FlowField, PixelGrid, compose_flows
from .flow_io import decode_flo, decode_pfm, encode_flo, encode_pfm
from .lateral_aug import flip_flow, rotation_flow, shear_flow
from .metrics import epe, f1_all
from .synthetic import constant_depth, slanted_plane_depth, textured_image
from .warp import photometric_error

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "seconds": self.seconds}


_CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = []


def _check(name: str):
    def register(fn):
        _CHECKS.append((name, fn))
        return fn

    return register


def _max_abs(flow: FlowField, mask=None) -> float:
    mask = flow.valid if mask is None else flow.valid & mask
    if not mask.any():
        return 0.0
    return float(max(np.abs(flow.u[mask]).max(), np.abs(flow.v[mask]).max()))


@_check("flip_closed_form_and_involution")
def _flip() -> Tuple[bool, str]:
    grid = PixelGrid(37, 23)
    xs, ys = grid.coords()
    worst = 0.0
    for horizontal in (True, False):
        forward, _ = flip_flow(grid, horizontal)
        expected = (grid.width - 1) - 2 * xs if horizontal else (grid.height - 1) - 2 * ys
        got = forward.u if horizontal else forward.v
        worst = max(worst, float(np.abs(got - expected).max()))
        twice = compose_flows(forward, forward)
        worst = max(worst, _max_abs(twice))
    return worst == 0.0, f"max error {worst:.3g}"


@_check("rotation_shear_cancel")
def _cancel() -> Tuple[bool, str]:
    grid = PixelGrid(64, 48)
    worst = 0.0
    pairs = [
        rotation_flow(grid, math.radians(17.0), 1, (30.0, 20.0)),
        rotation_flow(grid, math.radians(9.0), -1, (10.0, 40.0)),
        shear_flow(grid, 0.3, 1, True),
        shear_flow(grid, 0.25, -1, False),
    ]
    for forward, backward in pairs:
        worst = max(worst, _max_abs(compose_flows(forward, backward)))
    return worst < 1e-3, f"max residual {worst:.3g} px"


@_check("egomotion_oracles")
def _egomotion() -> Tuple[bool, str]:
    w, h = 48, 32
    depth = slanted_plane_depth(w, h)
    cam = CameraModel(100.0, 100.0, (w - 1) / 2.0, (h - 1) / 2.0)
    identity = _max_abs(egomotion_flow(depth, cam, RigidMotion.identity()))

    plane = constant_depth(w, h, 50.0)
    shift = egomotion_flow(plane, cam, RigidMotion.from_euler([0, 0, 0], [0.5, 0, 0]))
    translation = float(max(np.abs(shift.u - 1.0).max(), np.abs(shift.v).max()))

    phi = 0.02
    rolled = egomotion_flow(depth, cam, RigidMotion.from_euler([0, 0, phi], [0, 0, 0]))
    reference, _ = rotation_flow(depth.grid, phi, 1, (cam.cx, cam.cy))
    roll = float(max(np.abs(rolled.u - reference.u).max(), np.abs(rolled.v - reference.v).max()))

    passed = identity < 1e-6 and translation < 1e-5 and roll < 1e-4
    return passed, f"identity {identity:.2g}, translation {translation:.2g}, roll {roll:.2g}"


@_check("virtual_stereo_photoconsistency")
def _photoconsistency() -> Tuple[bool, str]:
    image = textured_image(64, 48, seed=3)
    depth = slanted_plane_depth(64, 48)
    cfg = VirtualStereoConfig(disparity_fraction_range=(0.05, 0.1))
    pair = synth_virtual_stereo(image, depth, cfg, np.random.default_rng(7))
    err = photometric_error(pair.sample.source, pair.sample.target, pair.sample.flow)
    return err < 0.02, f"mean abs error {err:.4f}"


@_check("classifier_special_flows")
def _classifier() -> Tuple[bool, str]:
    grid = PixelGrid(64, 48)
    cases = [
        (flip_flow(grid, True)[0], AugLabel.FLIP),
        (flip_flow(grid, False)[0], AugLabel.FLIP),
        (rotation_flow(grid, math.radians(12.0), 1, (31.5, 23.5))[0], AugLabel.ROTATE),
        (shear_flow(grid, 0.2, -1, True)[0], AugLabel.SHEAR),
        (FlowField.zeros(64, 48), AugLabel.NONE),
    ]
    wrong = [label.value for flow, label in cases if classify(flow).predicted is not label]
    return not wrong, "all classes recovered" if not wrong else f"misclassified: {wrong}"


@_check("codec_round_trips")
def _codecs() -> Tuple[bool, str]:
    rng = np.random.default_rng(0)
    uv = rng.normal(0, 5, size=(9, 11, 2)).astype(np.float32).astype(np.float64)
    valid = rng.random((9, 11)) > 0.2
    flow = FlowField.from_stack(uv, valid)
    back = decode_flo(encode_flo(flow))
    flo_ok = np.array_equal(back.valid, flow.valid) and np.array_equal(back.stack(), flow.stack())

    depth = slanted_plane_depth(11, 9)
    as_f32 = depth.values.astype(np.float32).astype(np.float64)
    pfm = decode_pfm(encode_pfm(depth))
    pfm_ok = np.array_equal(pfm.values, as_f32) and np.array_equal(pfm.valid, depth.valid)
    return flo_ok and pfm_ok, f"flo {'ok' if flo_ok else 'FAILED'}, pfm {'ok' if pfm_ok else 'FAILED'}"


@_check("metric_oracles")
def _metrics() -> Tuple[bool, str]:
    gt = FlowField.zeros(8, 8)
    pred = FlowField.constant(8, 8, 3.0, 4.0)
    value, _ = epe(pred, gt)
    same, _ = f1_all(gt, gt)
    return value == 5.0 and same == 0.0, f"3-4-5 epe {value}, self f1 {same}"


def run_selftest() -> List[CheckResult]:
    results = []
    for name, fn in _CHECKS:
        start = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as e:  # a crashing check is a failed check
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - start
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, "selftest %s: %s (%s)", name, "pass" if passed else "FAIL", detail)
        results.append(CheckResult(name, bool(passed), detail, round(elapsed, 3)))
    return results
