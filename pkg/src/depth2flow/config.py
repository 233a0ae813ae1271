"""
Generation config and dataset manifests.

Both are JSON and both are loaded strictly: any key the loader does not
know is an error, so a typo never silently falls back to a default.
"""

import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .depth_unify import VirtualStereoConfig
from .ego_motion import CameraModel, MotionSamplingConfig
from .errors import AugmentationError, ConfigError, Depth2FlowError
from .fields import AugLabel
from .lateral_aug import SIDES, AugRanges
from .warp import DEFAULT_DEPTH_TOLERANCE

logger = logging.getLogger(__name__)

TUPLE_KINDS = (
    "mono_01",
    "mono_12",
    "mono_02",
    "stereo_01",
    "stereo_12",
    "stereo_02",
    "vdisp_01",
    "vdisp_12",
    "vdisp_02",
)
OUTPUT_FORMATS = ("flo", "kitti-png")
_SEED_LIMIT = 1 << 64


@dataclass(frozen=True)
class LateralAugConfig:
    # chance that a base tuple also gets an augmented copy
    probability: float = 0.5
    weights: Dict[str, float] = field(
        default_factory=lambda: {"flip": 1.0, "rotate": 1.0, "shear": 1.0}
    )
    ranges: AugRanges = AugRanges()
    side: str = "target"

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"lateral.probability must lie in [0, 1], got {self.probability}")
        allowed = {AugLabel.FLIP.value, AugLabel.ROTATE.value, AugLabel.SHEAR.value}
        for name, weight in self.weights.items():
            if name not in allowed:
                raise ConfigError(f"unknown key lateral.weights.{name}")
            if not (isinstance(weight, (int, float)) and weight >= 0):
                raise ConfigError(f"lateral.weights.{name} must be a non-negative number")
        if self.probability > 0 and sum(self.weights.values()) <= 0:
            raise ConfigError("lateral.weights must not all be zero")
        if self.side not in SIDES:
            raise ConfigError(f"lateral.side must be one of {SIDES}, got {self.side!r}")

    def label_weights(self) -> Dict[AugLabel, float]:
        return {AugLabel(name): float(weight) for name, weight in self.weights.items()}


@dataclass(frozen=True)
class GenConfig:
    global_seed: int = 0
    counts: Dict[str, int] = field(default_factory=lambda: {kind: 1 for kind in TUPLE_KINDS})
    virtual_stereo: VirtualStereoConfig = VirtualStereoConfig()
    motion: MotionSamplingConfig = MotionSamplingConfig()
    lateral: LateralAugConfig = LateralAugConfig()
    output_format: str = "flo"
    output_dir: Optional[str] = None
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE
    stereo_virtual_disparity: bool = False

    def __post_init__(self):
        if isinstance(self.global_seed, bool) or not isinstance(self.global_seed, int):
            raise ConfigError("global_seed must be an integer")
        if not 0 <= self.global_seed < _SEED_LIMIT:
            raise ConfigError("global_seed must fit in 64 unsigned bits")
        for kind, count in self.counts.items():
            if kind not in TUPLE_KINDS:
                raise ConfigError(f"unknown key counts.{kind}")
            if isinstance(count, bool) or not isinstance(count, int) or count < 0:
                raise ConfigError(f"counts.{kind} must be a non-negative integer, got {count!r}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"output_format must be one of {OUTPUT_FORMATS}, got {self.output_format!r}")
        if not (isinstance(self.depth_tolerance, (int, float)) and 0 <= self.depth_tolerance < 1):
            raise ConfigError("depth_tolerance must lie in [0, 1)")

    def count(self, kind: str) -> int:
        return self.counts.get(kind, 1)

    def with_overrides(self, **overrides) -> "GenConfig":
        """Apply non-None overrides (CLI flags win over the file)"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _check_keys(data: Any, allowed, where: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {where + '.' if where else ''}{key}")
    return data


def _interval(value: Any, where: str) -> Tuple[float, float]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{where} must be a [min, max] pair")
    lo, hi = value
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in (lo, hi)):
        raise ConfigError(f"{where} must hold numbers")
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ConfigError(f"{where} is empty or inverted: {value}")
    return float(lo), float(hi)


def _build(cls, data: Any, where: str, intervals=(), interval_lists=(), nested=None):
    names = {f.name for f in fields(cls)}
    data = dict(_check_keys(data, names, where))
    for key in intervals:
        if data.get(key) is not None:
            data[key] = _interval(data[key], f"{where}.{key}")
    for key in interval_lists:
        if key in data:
            value = data[key]
            if not isinstance(value, list):
                raise ConfigError(f"{where}.{key} must be a list of [min, max] pairs")
            data[key] = tuple(_interval(v, f"{where}.{key}[{i}]") for i, v in enumerate(value))
    for key, builder in (nested or {}).items():
        if key in data:
            data[key] = builder(data[key], f"{where}.{key}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (Depth2FlowError, TypeError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _ranges(data: Any, where: str) -> AugRanges:
    return _build(AugRanges, data, where, intervals=("theta_range", "lambda_range"))


def _lateral(data: Any, where: str) -> LateralAugConfig:
    return _build(LateralAugConfig, data, where, nested={"ranges": _ranges})


def config_from_dict(data: Dict[str, Any]) -> GenConfig:
    """Build a GenConfig from parsed JSON, rejecting unknown keys at every level"""
    data = dict(_check_keys(data, {f.name for f in fields(GenConfig)}, ""))
    if "counts" in data:
        counts = {kind: 1 for kind in TUPLE_KINDS}
        counts.update(_check_keys(data["counts"], TUPLE_KINDS, "counts"))
        data["counts"] = counts
    if "virtual_stereo" in data:
        data["virtual_stereo"] = _build(
            VirtualStereoConfig,
            data["virtual_stereo"],
            "virtual_stereo",
            intervals=("s_c_range", "disparity_fraction_range"),
        )
    if "motion" in data:
        data["motion"] = _build(
            MotionSamplingConfig,
            data["motion"],
            "motion",
            interval_lists=("euler_range", "translation_range"),
        )
    if "lateral" in data:
        data["lateral"] = _lateral(data["lateral"], "lateral")
    try:
        return GenConfig(**data)
    except AugmentationError as e:
        raise ConfigError(str(e)) from e


def load_config(path: Optional[Union[str, Path]]) -> GenConfig:
    if path is None:
        return GenConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    return config_from_dict(data)


def config_to_dict(cfg: GenConfig) -> Dict[str, Any]:
    vs = cfg.virtual_stereo
    lat = cfg.lateral
    return {
        "global_seed": cfg.global_seed,
        "counts": dict(sorted(cfg.counts.items())),
        "virtual_stereo": {
            "s_c_range": list(vs.s_c_range) if vs.s_c_range is not None else None,
            "disparity_fraction_range": list(vs.disparity_fraction_range),
            "max_disparity_fraction": vs.max_disparity_fraction,
            "side_sign": vs.side_sign,
            "bf_stereo_constant": vs.bf_stereo_constant,
        },
        "motion": {
            "euler_range": [list(r) for r in cfg.motion.euler_range],
            "translation_range": [list(r) for r in cfg.motion.translation_range],
        },
        "lateral": {
            "probability": lat.probability,
            "weights": dict(sorted(lat.weights.items())),
            "ranges": {
                "theta_range": list(lat.ranges.theta_range),
                "lambda_range": list(lat.ranges.lambda_range),
                "center_fraction": lat.ranges.center_fraction,
            },
            "side": lat.side,
        },
        "output_format": cfg.output_format,
        "output_dir": cfg.output_dir,
        "depth_tolerance": cfg.depth_tolerance,
        "stereo_virtual_disparity": cfg.stereo_virtual_disparity,
    }


# --- manifests ---

_MONO_KEYS = {"sample_id", "modality", "image", "depth", "depth_scale", "intrinsics"}
_STEREO_KEYS = {
    "sample_id",
    "modality",
    "left",
    "right",
    "disparity",
    "depth_scale",
    "intrinsics",
    "disparity_sign",
}


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    modality: str
    # mono: (image,), stereo: (left, right)
    images: Tuple[Path, ...]
    # depth (mono) or disparity (stereo)
    scalar_map: Path
    depth_scale: float = 1.0
    intrinsics: Optional[CameraModel] = None
    disparity_sign: int = -1
    line: int = 0

    @property
    def paths(self) -> Tuple[Path, ...]:
        return self.images + (self.scalar_map,)


@dataclass(frozen=True)
class DatasetManifest:
    entries: List[ManifestEntry]
    root: Path

    def __len__(self) -> int:
        return len(self.entries)


def _entry(record: Any, lineno: int, root: Path) -> ManifestEntry:
    where = f"manifest line {lineno}"
    if not isinstance(record, dict):
        raise ConfigError(f"{where}: expected an object")
    modality = record.get("modality")
    if modality not in ("mono", "stereo"):
        raise ConfigError(f"{where}: modality must be 'mono' or 'stereo', got {modality!r}")
    allowed = _MONO_KEYS if modality == "mono" else _STEREO_KEYS
    for key in record:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key}")
    required = ("sample_id", "image", "depth") if modality == "mono" else ("sample_id", "left", "right", "disparity")
    for key in required:
        if not isinstance(record.get(key), str) or not record[key]:
            raise ConfigError(f"{where}: missing required key {key}")
    sample_id = record["sample_id"]
    # becomes a directory name under the output tree
    if "/" in sample_id or "\\" in sample_id or sample_id.startswith("."):
        raise ConfigError(f"{where}: sample_id {sample_id!r} must be a plain name without a leading dot")

    scale = record.get("depth_scale", 1.0)
    if isinstance(scale, bool) or not isinstance(scale, (int, float)) or not scale > 0:
        raise ConfigError(f"{where}: depth_scale must be a positive number")
    sign = record.get("disparity_sign", -1)
    if sign not in (-1, 1):
        raise ConfigError(f"{where}: disparity_sign must be -1 or 1")

    intrinsics = None
    if record.get("intrinsics") is not None:
        params = _check_keys(record["intrinsics"], ("fx", "fy", "cx", "cy"), f"{where}: intrinsics")
        try:
            intrinsics = CameraModel(**{k: float(params[k]) for k in ("fx", "fy", "cx", "cy")})
        except KeyError as e:
            raise ConfigError(f"{where}: intrinsics missing {e.args[0]}") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}: {e}") from e

    if modality == "mono":
        images = (root / record["image"],)
        scalar_map = root / record["depth"]
    else:
        images = (root / record["left"], root / record["right"])
        scalar_map = root / record["disparity"]
    return ManifestEntry(
        sample_id=sample_id,
        modality=modality,
        images=images,
        scalar_map=scalar_map,
        depth_scale=float(scale),
        intrinsics=intrinsics,
        disparity_sign=sign,
        line=lineno,
    )


def parse_manifest(text: str, root: Union[str, Path]) -> DatasetManifest:
    root = Path(root)
    entries: List[ManifestEntry] = []
    seen: Dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise ConfigError(f"manifest line {lineno}: invalid JSON: {e.msg}") from e
        entry = _entry(record, lineno, root)
        if entry.sample_id in seen:
            raise ConfigError(
                f"manifest line {lineno}: duplicate sample_id {entry.sample_id!r} "
                f"(first on line {seen[entry.sample_id]})"
            )
        seen[entry.sample_id] = lineno
        entries.append(entry)
    logger.info("manifest: %d entries", len(entries))
    return DatasetManifest(entries, root)


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Load a JSON Lines manifest; relative paths resolve against its directory"""
    path = Path(path)
    return parse_manifest(path.read_text(), path.parent)
