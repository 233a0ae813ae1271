"""
Dataset generation driver.

Each manifest entry is processed independently in a worker thread: read the
inputs, build the stereo pairs, move a virtual camera, optionally augment,
then write every tuple atomically under ``out/samples/<sample_id>/``. All
randomness comes from per-sample streams keyed by (global_seed, sample_id,
stage), so the output tree does not depend on worker count or scheduling.
"""

import asyncio
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .config import GenConfig, DatasetManifest, ManifestEntry, config_to_dict
from .depth_unify import StereoPair, ingest_stereo, synth_virtual_stereo
from .ego_motion import CameraModel, synth_general_tuples
from .errors import Depth2FlowError
from .fields import AugLabel, FlowField, Image, SampleTuple, ScalarField
from .flow_io import (
    FLOW_SUFFIXES,
    KITTI_LIMIT,
    read_flow,
    read_image,
    read_scalar_map,
    write_atomic,
    write_flow,
    write_image,
    write_mask,
)
from .lateral_aug import apply_lateral_aug, sample_aug_spec

logger = logging.getLogger(__name__)

DEFAULT_WORKERS = 4
SAMPLES_DIR = "samples"
REPORT_NAME = "report.json"

Named = Tuple[str, SampleTuple]


def sample_rng(global_seed: int, sample_id: str, stage: str) -> np.random.Generator:
    """Independent stream per (seed, sample, stage); stable across runs and platforms"""
    key = f"{global_seed}\x1f{sample_id}\x1f{stage}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=16).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def tuple_kind(name: str) -> str:
    """mono_12_0_1_aug -> mono_12"""
    return "_".join(name.split("_")[:2])


@dataclass
class SampleOutcome:
    sample_id: str
    ok: bool = True
    reason: Optional[str] = None
    tuples: List[str] = field(default_factory=list)
    coverage: Dict[str, float] = field(default_factory=dict)
    labels: Dict[str, str] = field(default_factory=dict)
    events: List[str] = field(default_factory=list)


def _event(outcome: SampleOutcome, message: str, level: int = logging.INFO) -> None:
    outcome.events.append(message)
    logger.log(level, "%s: %s", outcome.sample_id, message)


# --- tuple construction ---


def _camera(entry: ManifestEntry, width: int, height: int) -> CameraModel:
    return entry.intrinsics if entry.intrinsics is not None else CameraModel.default(width, height)


def _pair_count(cfg: GenConfig, prefix: str) -> int:
    n01 = cfg.count(f"{prefix}_01")
    if n01 > 0:
        return n01
    return 1 if cfg.count(f"{prefix}_12") or cfg.count(f"{prefix}_02") else 0


def _expand_pair(
    prefix: str,
    index: int,
    pair: StereoPair,
    cam: CameraModel,
    cfg: GenConfig,
    outcome: SampleOutcome,
) -> List[Named]:
    """The pair itself plus the 1->2 and 0->2 tuples of every sampled camera motion"""
    out: List[Named] = []
    for event in pair.events:
        _event(outcome, f"{prefix}[{index}]: {event}", logging.WARNING)
    if cfg.count(f"{prefix}_01") > 0:
        out.append((f"{prefix}_01_{index}", pair.sample))

    n12 = cfg.count(f"{prefix}_12")
    n02 = cfg.count(f"{prefix}_02")
    for j in range(max(n12, n02)):
        rng = sample_rng(cfg.global_seed, outcome.sample_id, f"{prefix}/motion/{index}/{j}")
        try:
            _, t12, t02 = synth_general_tuples(
                pair, cam, cfg.motion, rng, depth_tolerance=cfg.depth_tolerance
            )
        except Depth2FlowError as e:
            _event(outcome, f"{prefix}[{index}] motion {j} skipped: {e}", logging.WARNING)
            continue
        if j < n12:
            out.append((f"{prefix}_12_{index}_{j}", t12))
        if j < n02:
            out.append((f"{prefix}_02_{index}_{j}", t02))
    return out


def _virtual_pairs(
    prefix: str, image: Image, depth: ScalarField, cfg: GenConfig, outcome: SampleOutcome
) -> List[StereoPair]:
    pairs = []
    for i in range(_pair_count(cfg, prefix)):
        rng = sample_rng(cfg.global_seed, outcome.sample_id, f"{prefix}/vstereo/{i}")
        pairs.append(synth_virtual_stereo(image, depth, cfg.virtual_stereo, rng, cfg.depth_tolerance))
    return pairs


def build_tuples(entry: ManifestEntry, cfg: GenConfig, outcome: SampleOutcome) -> List[Named]:
    """Read one manifest entry and produce its named base tuples"""
    named: List[Named] = []
    if entry.modality == "mono":
        image = read_image(entry.images[0])
        raw = read_scalar_map(entry.scalar_map, entry.depth_scale)
        depth = ScalarField.from_array(raw.values, raw.valid, positive=True)
        cam = _camera(entry, image.width, image.height)
        for i, pair in enumerate(_virtual_pairs("mono", image, depth, cfg, outcome)):
            named.extend(_expand_pair("mono", i, pair, cam, cfg, outcome))
        return named

    left = read_image(entry.images[0])
    right = read_image(entry.images[1])
    disparity = read_scalar_map(entry.scalar_map, entry.depth_scale)
    cam = _camera(entry, left.width, left.height)
    if _pair_count(cfg, "stereo") > 0:
        if cfg.count("stereo_01") > 1:
            _event(outcome, "stereo_01 clamped to 1 (one real pair per sample)", logging.WARNING)
        pair = ingest_stereo(
            left,
            right,
            disparity,
            cfg.virtual_stereo.bf_stereo_constant,
            sign=entry.disparity_sign,
            depth_tolerance=cfg.depth_tolerance,
        )
        named.extend(_expand_pair("stereo", 0, pair, cam, cfg, outcome))

        if cfg.stereo_virtual_disparity:
            for i, vpair in enumerate(_virtual_pairs("vdisp", left, pair.depth_source, cfg, outcome)):
                named.extend(_expand_pair("vdisp", i, vpair, cam, cfg, outcome))
    return named


def augment_tuples(named: List[Named], cfg: GenConfig, sample_id: str, stage: str = "lateral") -> List[Named]:
    """Laterally augmented copies, each drawn with probability cfg.lateral.probability"""
    lateral = cfg.lateral
    out: List[Named] = []
    if lateral.probability <= 0:
        return out
    weights = lateral.label_weights()
    for name, sample in named:
        rng = sample_rng(cfg.global_seed, sample_id, f"{stage}/{name}")
        if rng.random() >= lateral.probability:
            continue
        spec = sample_aug_spec(sample.flow.grid, rng, lateral.ranges, weights)
        out.append(
            (f"{name}_aug", apply_lateral_aug(sample, spec, lateral.side, rng, lateral.ranges))
        )
    return out


# --- writing ---


def write_tuple(directory: Path, sample: SampleTuple, cfg: GenConfig, kind: str) -> float:
    """Write source, target, flow, mask and meta.json; returns mask coverage"""
    sample.flow.check_sanity()
    write_image(directory / "source.png", sample.source)
    write_image(directory / "target.png", sample.target)
    write_flow(directory / f"flow{FLOW_SUFFIXES[cfg.output_format]}", sample.flow, cfg.output_format)
    write_mask(directory / "mask.png", sample.mask)
    coverage = sample.flow.valid_fraction()
    meta = {
        "kind": kind,
        "label": sample.label.value,
        "coverage": coverage,
        "width": sample.flow.width,
        "height": sample.flow.height,
        "params": sample.meta,
    }
    write_atomic(directory / "meta.json", (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return coverage


def _write_all(named: List[Named], sample_dir: Path, cfg: GenConfig, outcome: SampleOutcome) -> None:
    for name, sample in named:
        too_far = int(sample.flow.out_of_bounds().sum())
        if too_far:
            message = f"{name}: {too_far} pixels beyond the flow sanity bound invalidated"
            _event(outcome, message, logging.WARNING)
            sample = replace(sample, flow=sample.flow.bounded())
        if cfg.output_format == "kitti-png" and sample.flow.max_abs() >= KITTI_LIMIT:
            _event(outcome, f"{name} skipped: flow exceeds the KITTI PNG range", logging.WARNING)
            continue
        outcome.coverage[name] = write_tuple(sample_dir / name, sample, cfg, tuple_kind(name))
        outcome.labels[name] = sample.label.value
        outcome.tuples.append(name)


def process_sample(entry: ManifestEntry, cfg: GenConfig, out_dir: Path) -> SampleOutcome:
    outcome = SampleOutcome(entry.sample_id)
    logger.info("%s: start (%s)", entry.sample_id, entry.modality)
    missing = [str(p) for p in entry.paths if not p.exists()]
    if missing:
        outcome.ok = False
        outcome.reason = f"missing file: {', '.join(missing)}"
        logger.warning("%s: skipped, %s", entry.sample_id, outcome.reason)
        return outcome
    try:
        named = build_tuples(entry, cfg, outcome)
        named.extend(augment_tuples(named, cfg, entry.sample_id))
        _write_all(named, out_dir / SAMPLES_DIR / entry.sample_id, cfg, outcome)
    except (Depth2FlowError, OSError) as e:
        outcome.ok = False
        outcome.reason = f"{type(e).__name__}: {e}"
        logger.warning("%s: skipped, %s", entry.sample_id, outcome.reason)
        return outcome
    logger.info("%s: done, %d tuples", entry.sample_id, len(outcome.tuples))
    return outcome


# --- report ---


def build_report(outcomes: List[SampleOutcome], cfg: GenConfig) -> Dict[str, Any]:
    outcomes = sorted(outcomes, key=lambda o: o.sample_id)
    coverage: Dict[str, List[float]] = {}
    counts: Dict[str, int] = {}
    augmented: Dict[str, int] = {}
    events = []
    samples = {}
    for o in outcomes:
        samples[o.sample_id] = {"status": "ok" if o.ok else "skipped", "tuples": sorted(o.tuples)}
        if o.reason:
            samples[o.sample_id]["reason"] = o.reason
        for name in sorted(o.tuples):
            kind = tuple_kind(name)
            counts[kind] = counts.get(kind, 0) + 1
            coverage.setdefault(kind, []).append(o.coverage[name])
            if name.endswith("_aug"):
                label = o.labels[name]
                augmented[label] = augmented.get(label, 0) + 1
        events.extend({"sample_id": o.sample_id, "event": e} for e in o.events)

    settings = config_to_dict(cfg)
    settings.pop("output_dir")
    return {
        "config": settings,
        "n_samples": len(outcomes),
        "n_skipped": sum(1 for o in outcomes if not o.ok),
        "n_tuples": sum(counts.values()),
        "counts": dict(sorted(counts.items())),
        "augmented": dict(sorted(augmented.items())),
        "coverage": {
            kind: {"min": min(values), "mean": float(np.mean(values))}
            for kind, values in sorted(coverage.items())
        },
        "samples": samples,
        "events": events,
    }


def _finish(outcomes: List[SampleOutcome], cfg: GenConfig, out_dir: Path) -> Dict[str, Any]:
    report = build_report(outcomes, cfg)
    write_atomic(out_dir / REPORT_NAME, (json.dumps(report, indent=2) + "\n").encode("utf-8"))
    logger.info(
        "generated %d tuples from %d samples (%d skipped)",
        report["n_tuples"],
        report["n_samples"],
        report["n_skipped"],
    )
    if outcomes and all(not o.ok for o in outcomes):
        raise Depth2FlowError(f"all {len(outcomes)} samples failed; see {out_dir / REPORT_NAME}")
    return report


def _resolve_out(cfg: GenConfig, out_dir: Optional[Union[str, Path]]) -> Path:
    target = out_dir if out_dir is not None else cfg.output_dir
    if target is None:
        raise Depth2FlowError("no output directory: pass one or set output_dir in the config")
    return Path(target)


async def _bounded(items, worker, workers: int):
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run_one(item):
        async with semaphore:
            return await asyncio.to_thread(worker, item)

    return await asyncio.gather(*(run_one(item) for item in items))


async def generate(
    manifest: DatasetManifest,
    cfg: GenConfig,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = DEFAULT_WORKERS,
) -> Dict[str, Any]:
    """
    Generate the dataset described by ``manifest`` and return the report.

    Args:
        manifest: samples to process
        cfg: generation settings
        out_dir: output root; defaults to cfg.output_dir
        workers: samples processed concurrently
    """
    if not manifest.entries:
        raise Depth2FlowError("manifest has no entries")
    out = _resolve_out(cfg, out_dir)
    outcomes = await _bounded(manifest.entries, lambda e: process_sample(e, cfg, out), workers)
    return _finish(list(outcomes), cfg, out)


def run_generation(
    manifest: DatasetManifest,
    cfg: GenConfig,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = DEFAULT_WORKERS,
) -> Dict[str, Any]:
    return asyncio.run(generate(manifest, cfg, out_dir, workers))


# --- augmenting an existing tree ---


def read_tuple(directory: Path) -> SampleTuple:
    flow_path = next(
        (directory / f"flow{suffix}" for suffix in (".flo", ".png") if (directory / f"flow{suffix}").exists()),
        None,
    )
    if flow_path is None:
        raise FileNotFoundError(f"no flow file in {directory}")
    flow: FlowField = read_flow(flow_path)
    meta_path = directory / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return SampleTuple(
        read_image(directory / "source.png"),
        read_image(directory / "target.png"),
        flow,
        AugLabel(meta.get("label", "none")),
        dict(meta.get("params", {})),
    )


def _augment_sample(sample_dir: Path, cfg: GenConfig, out: Path) -> SampleOutcome:
    outcome = SampleOutcome(sample_dir.name)
    try:
        named = [
            (d.name, read_tuple(d))
            for d in sorted(sample_dir.iterdir())
            if d.is_dir() and not d.name.endswith("_aug")
        ]
        augmented = augment_tuples(named, cfg, sample_dir.name, stage="augment")
        _write_all(augmented, out / SAMPLES_DIR / sample_dir.name, cfg, outcome)
    except (Depth2FlowError, OSError) as e:
        outcome.ok = False
        outcome.reason = f"{type(e).__name__}: {e}"
        logger.warning("%s: skipped, %s", sample_dir.name, outcome.reason)
    return outcome


async def augment(
    in_dir: Union[str, Path],
    cfg: GenConfig,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = DEFAULT_WORKERS,
) -> Dict[str, Any]:
    """Add lateral augmentations to every base tuple of an existing generated tree"""
    root = Path(in_dir) / SAMPLES_DIR
    if not root.is_dir():
        raise Depth2FlowError(f"not a generated dataset: {in_dir} has no {SAMPLES_DIR}/")
    out = _resolve_out(cfg, out_dir)
    sample_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    outcomes = await _bounded(sample_dirs, lambda d: _augment_sample(d, cfg, out), workers)
    return _finish(list(outcomes), cfg, out)


def augment_dataset(
    in_dir: Union[str, Path],
    cfg: GenConfig,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = DEFAULT_WORKERS,
) -> Dict[str, Any]:
    return asyncio.run(augment(in_dir, cfg, out_dir, workers))
