"""Endpoint error and KITTI-style outlier rate"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np

from .classifier import DEFAULT_LAMBDA_C, classify, loss_lc, loss_lp
from .errors import Depth2FlowError, DimensionMismatchError, FeatureError
from .fields import AugLabel, FlowField
from .flow_io import read_flow

logger = logging.getLogger(__name__)

OUTLIER_ABS = 3.0
OUTLIER_REL = 0.05


@dataclass(frozen=True)
class EvalReport:
    epe: float
    f1_all: float
    n_valid: int
    # ground-truth-valid pixels, the F1-all denominator
    n_gt: int

    def as_dict(self):
        return {"epe": self.epe, "f1_all": self.f1_all, "n_valid": self.n_valid, "n_gt": self.n_gt}


def _check(pred: FlowField, gt: FlowField) -> None:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatchError("pred/gt", (pred.height, pred.width), (gt.height, gt.width))


def _endpoint_error(pred: FlowField, gt: FlowField) -> np.ndarray:
    return np.hypot(pred.u - gt.u, pred.v - gt.v)


def epe(pred: FlowField, gt: FlowField) -> Tuple[float, int]:
    """Mean endpoint error over mutually valid pixels, and how many there were"""
    _check(pred, gt)
    both = pred.valid & gt.valid
    n = int(both.sum())
    if n == 0:
        raise Depth2FlowError("empty overlap: no mutually valid pixels")
    return float(_endpoint_error(pred, gt)[both].mean()), n


def f1_all(pred: FlowField, gt: FlowField) -> Tuple[float, int]:
    """
    Percentage of ground-truth-valid pixels that are outliers: error above
    3 px and above 5% of the ground-truth magnitude. A pixel missing from the
    prediction is always an outlier.
    """
    _check(pred, gt)
    n = int(gt.valid.sum())
    if n == 0 or not (pred.valid & gt.valid).any():
        raise Depth2FlowError("empty overlap: no mutually valid pixels")
    err = np.where(pred.valid, _endpoint_error(pred, gt), np.inf)
    outlier = (err > OUTLIER_ABS) & (err > OUTLIER_REL * gt.magnitude())
    return float(100.0 * outlier[gt.valid].mean()), n


def evaluate(pred: FlowField, gt: FlowField) -> EvalReport:
    mean_epe, n = epe(pred, gt)
    outliers, n_gt = f1_all(pred, gt)
    return EvalReport(mean_epe, outliers, n, n_gt)


def aggregate(reports: Iterable[EvalReport]) -> EvalReport:
    """
    Pixel-weighted combination of per-file reports: EPE over mutually valid
    pixels, F1-all over ground-truth-valid pixels
    """
    reports = list(reports)
    total = sum(r.n_valid for r in reports)
    total_gt = sum(r.n_gt for r in reports)
    if total == 0 or total_gt == 0:
        raise Depth2FlowError("nothing to aggregate")
    return EvalReport(
        epe=sum(r.epe * r.n_valid for r in reports) / total,
        f1_all=sum(r.f1_all * r.n_gt for r in reports) / total_gt,
        n_valid=total,
        n_gt=total_gt,
    )


# --- directory evaluation ---

# image files that live next to flow files in a generated tree
_NON_FLOW_NAMES = {"source.png", "target.png", "mask.png"}
_FORMAT_SUFFIX = {"flo": ".flo", "kitti": ".png", "kitti-png": ".png"}


def _flow_files(root: Path, suffix: str):
    return sorted(
        p.relative_to(root)
        for p in root.rglob(f"*{suffix}")
        if p.is_file() and p.name not in _NON_FLOW_NAMES
    )


def _label_of(gt_path: Path) -> Optional[AugLabel]:
    meta_path = gt_path.parent / "meta.json"
    if not meta_path.exists():
        return None
    label = json.loads(meta_path.read_text()).get("label")
    return AugLabel(label) if label else None


def evaluate_directories(
    pred_dir: Union[str, Path],
    gt_dir: Union[str, Path],
    fmt: str = "flo",
    lambda_c: float = DEFAULT_LAMBDA_C,
) -> Dict[str, Any]:
    """
    Compare every ground-truth flow under ``gt_dir`` with the prediction at the
    same relative path under ``pred_dir``.

    Each file gets EPE, F1-all and L_P. When a meta.json next to the ground
    truth records an augmentation label, L_C (classifier on the prediction)
    and L = L_P + lambda_c * L_C are added. The aggregate is pixel-weighted.
    A prediction with no valid pixels over the ground truth is listed under
    "empty" and counts as 100% outliers.
    """
    if fmt not in _FORMAT_SUFFIX:
        raise Depth2FlowError(f"unknown flow format: {fmt}")
    pred_root, gt_root = Path(pred_dir), Path(gt_dir)
    suffix = _FORMAT_SUFFIX[fmt]
    files = {}
    reports = []
    missing = []
    empty = []
    for rel in _flow_files(gt_root, suffix):
        pred_path = pred_root / rel
        if not pred_path.exists():
            missing.append(str(rel))
            continue
        gt = read_flow(gt_root / rel)
        pred = read_flow(pred_path)
        _check(pred, gt)
        if gt.valid.any() and not (pred.valid & gt.valid).any():
            # nothing to compare: every ground-truth pixel is an outlier
            logger.warning("%s: prediction has no valid pixels over the ground truth", rel)
            n_gt = int(gt.valid.sum())
            reports.append(EvalReport(0.0, 100.0, 0, n_gt))
            files[str(rel)] = {"epe": None, "f1_all": 100.0, "n_valid": 0, "n_gt": n_gt}
            empty.append(str(rel))
            continue
        report = evaluate(pred, gt)
        reports.append(report)
        entry: Dict[str, Any] = dict(report.as_dict(), loss_lp=loss_lp(pred, gt))
        label = _label_of(gt_root / rel)
        if label is not None:
            try:
                lc = loss_lc(classify(pred), label)
            except FeatureError as e:
                logger.info("%s: no classifier loss, %s", rel, e)
            else:
                entry.update(label=label.value, loss_lc=lc, loss_total=entry["loss_lp"] + lambda_c * lc)
        files[str(rel)] = entry
    if not reports:
        raise Depth2FlowError(f"no {suffix} flow pairs found under {gt_root} and {pred_root}")
    return {
        "files": files,
        "aggregate": aggregate(reports).as_dict(),
        "missing": missing,
        "empty": empty,
    }
