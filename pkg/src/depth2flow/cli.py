"""
depth2flow command line.

Results go to stdout as JSON; logs and errors go to stderr. A failing
command prints one JSON line {"error": ..., "message": ...} and exits 1.
"""

import argparse
import json
import logging
import sys
from typing import Any, List, Optional

from .classifier import DEFAULT_LAMBDA_C, classify, extract_features
from .config import OUTPUT_FORMATS, load_config, load_manifest
from .errors import Depth2FlowError
from .flow_io import read_flow, summarize_flow, visualize_flow, write_image
from .generation import DEFAULT_WORKERS, augment_dataset, run_generation
from .metrics import evaluate_directories
from .selftest import run_selftest

logger = logging.getLogger(__name__)

_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depth2flow",
        description="Optical-flow training data from monocular depth and stereo disparity.",
    )
    parser.add_argument("--log-level", choices=_LEVELS, default=None, help="Log level (default WARNING)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Generate flow tuples from a manifest")
    gen.add_argument("--manifest", required=True, help="JSON Lines dataset manifest")
    gen.add_argument("--config", default=None, help="JSON generation config")
    gen.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
    gen.add_argument("--seed", type=int, default=None, help="Global seed (overrides global_seed)")
    gen.add_argument("--workers", type=int, default=DEFAULT_WORKERS, help="Samples processed in parallel")
    gen.add_argument("--format", choices=OUTPUT_FORMATS, default=None, help="Flow file format")

    aug = sub.add_parser("augment", help="Add lateral augmentations to a generated tree")
    aug.add_argument("--in", dest="in_dir", required=True, help="Generated dataset directory")
    aug.add_argument("--out", required=True, help="Output directory")
    aug.add_argument("--config", default=None, help="JSON generation config")
    aug.add_argument("--seed", type=int, default=None, help="Global seed")
    aug.add_argument("--workers", type=int, default=DEFAULT_WORKERS)

    cls = sub.add_parser("classify", help="Print the 4-class augmentation posterior of a flow")
    cls.add_argument("--flow", required=True, help=".flo or KITTI .png flow file")

    ev = sub.add_parser("eval", help="EPE / F1-all of predicted flows against ground truth")
    ev.add_argument("--pred", required=True, help="Directory of predicted flows")
    ev.add_argument("--gt", required=True, help="Directory of ground-truth flows")
    ev.add_argument("--format", choices=("flo", "kitti"), default="flo")
    ev.add_argument("--lambda-c", type=float, default=DEFAULT_LAMBDA_C, help="Weight of L_C in L")

    ins = sub.add_parser("inspect", help="Render a flow as a color-wheel PNG")
    ins.add_argument("--flow", required=True)
    ins.add_argument("--out", required=True, help="PNG to write")

    sub.add_parser("selftest", help="Run the analytic invariant suite")
    sub.add_parser("serve", help="Run the MCP tool server on stdio")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    if args.log_level:
        level = getattr(logging, args.log_level)
    else:
        level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        force=True,
    )


def _emit(payload: Any) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _cmd_generate(args) -> int:
    cfg = load_config(args.config).with_overrides(
        global_seed=args.seed, output_dir=args.out, output_format=args.format
    )
    report = run_generation(load_manifest(args.manifest), cfg, workers=args.workers)
    _emit(
        {
            "out": cfg.output_dir,
            "n_tuples": report["n_tuples"],
            "n_skipped": report["n_skipped"],
            "counts": report["counts"],
        }
    )
    return 0


def _cmd_augment(args) -> int:
    cfg = load_config(args.config).with_overrides(global_seed=args.seed, output_dir=args.out)
    report = augment_dataset(args.in_dir, cfg, workers=args.workers)
    _emit({"out": args.out, "n_tuples": report["n_tuples"], "augmented": report["augmented"]})
    return 0


def _cmd_classify(args) -> int:
    flow = read_flow(args.flow)
    result = classify(flow).as_dict()
    result["features"] = extract_features(flow).as_dict()
    _emit(result)
    return 0


def _cmd_eval(args) -> int:
    _emit(evaluate_directories(args.pred, args.gt, args.format, args.lambda_c))
    return 0


def _cmd_inspect(args) -> int:
    flow = read_flow(args.flow)
    written = write_image(args.out, visualize_flow(flow))
    _emit(dict(summarize_flow(flow), path=args.flow, out=str(written)))
    return 0


def _cmd_selftest(args) -> int:
    results = run_selftest()
    _emit([r.as_dict() for r in results])
    failed = [r.name for r in results if not r.passed]
    if failed:
        _emit_error("SelftestFailed", f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return 1
    return 0


def _cmd_serve(args) -> int:
    from .server import run

    run()
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "augment": _cmd_augment,
    "classify": _cmd_classify,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
    "selftest": _cmd_selftest,
    "serve": _cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        return _COMMANDS[args.command](args)
    except (Depth2FlowError, OSError) as e:
        logger.debug("command %s failed", args.command, exc_info=True)
        _emit_error(type(e).__name__, str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
