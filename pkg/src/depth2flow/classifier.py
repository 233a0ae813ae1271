"""
Four-way augmentation classifier over flow appearance, plus the training
losses built on it.

The classifier reads a robust estimate of the flow Jacobian: flips drive a
diagonal entry to -2, rotations produce opposite-signed off-diagonals and
shears a single dominant off-diagonal. Logit order follows AugLabel.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from .errors import DimensionMismatchError, FeatureError
from .fields import AugLabel, FlowField

logger = logging.getLogger(__name__)

MIN_VALID_PIXELS = 100
DEFAULT_LAMBDA_C = 0.1

# off-diagonal magnitude separating "no geometric augmentation" from rotate/shear
_TAU = 0.045
_GAIN = 40.0
_FLIP_GAIN = 20.0
# off-diagonal entries are shrunk by this many MADs before scoring
_SPREAD_K = 3.5
_POSTERIOR_FLOOR = 1e-12


@dataclass(frozen=True)
class FlowFeatures:
    # [[du/dx, du/dy], [dv/dx, dv/dy]]
    jac: np.ndarray
    jac_dispersion: np.ndarray
    mean_mag: float
    n_samples: int

    def as_dict(self) -> Dict[str, Any]:
        return {
            "jac": self.jac.tolist(),
            "jac_dispersion": self.jac_dispersion.tolist(),
            "mean_mag": self.mean_mag,
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class ClassPosterior:
    logits: np.ndarray
    posterior: np.ndarray

    @classmethod
    def from_logits(cls, logits) -> "ClassPosterior":
        logits = np.asarray(logits, dtype=np.float64)
        shifted = np.exp(logits - logits.max())
        return cls(logits, shifted / shifted.sum())

    @classmethod
    def one_hot(cls, label: AugLabel) -> "ClassPosterior":
        posterior = np.zeros(len(AugLabel))
        posterior[label.index] = 1.0
        return cls(np.log(np.maximum(posterior, _POSTERIOR_FLOOR)), posterior)

    @property
    def predicted(self) -> AugLabel:
        return list(AugLabel)[int(np.argmax(self.posterior))]

    def prob(self, label: AugLabel) -> float:
        return float(self.posterior[label.index])

    def as_dict(self) -> Dict[str, Any]:
        return {
            "predicted": self.predicted.value,
            "logits": {label.value: float(self.logits[label.index]) for label in AugLabel},
            "posterior": {label.value: float(self.posterior[label.index]) for label in AugLabel},
        }


def extract_features(flow: FlowField) -> FlowFeatures:
    """Median central-difference Jacobian over interior pixels whose neighbors are valid"""
    n_valid = int(flow.valid.sum())
    if n_valid < MIN_VALID_PIXELS:
        raise FeatureError(f"too few valid pixels: {n_valid} < {MIN_VALID_PIXELS}")
    if flow.width < 3 or flow.height < 3:
        raise FeatureError(f"flow {flow.width}x{flow.height} has no interior pixels")

    valid = flow.valid
    # x derivatives need left/right neighbors, y derivatives up/down
    x_ok = valid[:, 2:] & valid[:, :-2]
    y_ok = valid[2:, :] & valid[:-2, :]
    entries = []
    for component in (flow.u, flow.v):
        dx = (component[:, 2:] - component[:, :-2]) / 2.0
        dy = (component[2:, :] - component[:-2, :]) / 2.0
        entries.append((dx[x_ok], dy[y_ok]))

    samples = [values for pair in entries for values in pair]
    n_samples = min(values.size for values in samples)
    if n_samples == 0:
        raise FeatureError("too few valid pixels: no interior neighborhoods")

    medians = np.array([np.median(values) for values in samples])
    mads = np.array([np.median(np.abs(values - m)) for values, m in zip(samples, medians)])
    magnitude = flow.magnitude()[valid]
    return FlowFeatures(
        jac=medians.reshape(2, 2),
        jac_dispersion=mads.reshape(2, 2),
        mean_mag=float(magnitude.mean()),
        n_samples=int(n_samples),
    )


def _shrink(value: float, spread: float) -> float:
    return float(np.sign(value)) * max(0.0, abs(value) - _SPREAD_K * spread)


def _logits(features: FlowFeatures) -> np.ndarray:
    (a, b), (c, d) = features.jac
    # depth-driven base flows vary across the image while the affine
    # augmentations add a constant, so only the spread-free part counts
    b = _shrink(b, features.jac_dispersion[0, 1])
    c = _shrink(c, features.jac_dispersion[1, 0])
    flip_evidence = max(0.0, 1.0 - min(abs(a + 2.0), abs(d + 2.0)))
    rotate_evidence = min(abs(b), abs(c)) if b * c < 0 else 0.0
    shear_evidence = max(abs(b), abs(c)) - min(abs(b), abs(c))
    off_diagonal = max(abs(b), abs(c))

    logits = np.empty(len(AugLabel))
    logits[AugLabel.FLIP.index] = _FLIP_GAIN * (flip_evidence - 0.5)
    logits[AugLabel.ROTATE.index] = _GAIN * (rotate_evidence - _TAU)
    logits[AugLabel.SHEAR.index] = _GAIN * (shear_evidence - _TAU)
    logits[AugLabel.NONE.index] = _GAIN * (_TAU - off_diagonal) / 2.0
    return logits


def classify(flow: FlowField) -> ClassPosterior:
    posterior = ClassPosterior.from_logits(_logits(extract_features(flow)))
    logger.debug("classify: %s", posterior.predicted.value)
    return posterior


def loss_lp(pred: FlowField, gt: FlowField) -> float:
    """Mean absolute error of both components over mutually valid pixels"""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatchError("pred/gt", (pred.height, pred.width), (gt.height, gt.width))
    both = pred.valid & gt.valid
    if not both.any():
        raise FeatureError("no mutually valid pixels")
    diff = np.concatenate([np.abs(pred.u - gt.u)[both], np.abs(pred.v - gt.v)[both]])
    return float(diff.mean())


def loss_lc(posterior: ClassPosterior, label: AugLabel) -> float:
    """Cross entropy of the posterior against the true augmentation class"""
    return float(-np.log(max(posterior.prob(label), _POSTERIOR_FLOOR)))


def loss_total(
    pred: FlowField,
    gt: FlowField,
    posterior: ClassPosterior,
    label: AugLabel,
    lambda_c: float = DEFAULT_LAMBDA_C,
) -> float:
    if lambda_c < 0:
        raise ValueError(f"lambda_c must be non-negative, got {lambda_c}")
    return loss_lp(pred, gt) + lambda_c * loss_lc(posterior, label)
