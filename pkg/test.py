#!/usr/bin/env python3
"""Demo script: generate a small dataset, then inspect it through the tool server"""

import asyncio
import tempfile
from pathlib import Path

from depth2flow.config import load_config, load_manifest
from depth2flow.generation import SAMPLES_DIR, generate
from depth2flow.server import FlowToolServer
from depth2flow.synthetic import write_demo_dataset


async def demo(root: Path):
    flows = FlowToolServer()

    print("🚀 depth2flow demo")
    print("=" * 60)

    print("\nWriting the synthetic demo dataset...")
    manifest_path = write_demo_dataset(root / "data")
    manifest = load_manifest(manifest_path)
    print(f"  {len(manifest)} samples in {manifest_path}")

    # Step 1: Generation
    print("\n" + "=" * 60)
    print("🧮 Generating tuples:")
    cfg = load_config(None).with_overrides(global_seed=7)
    report = await generate(manifest, cfg, root / "out", workers=2)
    for kind, n in sorted(report["counts"].items()):
        print(f"  - {kind}: {n}")
    print(f"  Skipped samples: {report['n_skipped']}")
    for event in report["events"]:
        print(f"  ⚠️  {event['sample_id']}: {event['event']}")

    # Step 2: Flow statistics and classification
    print("\n" + "=" * 60)
    print("📊 Flow files:")
    for path in sorted((root / "out" / SAMPLES_DIR).rglob("flow.flo"))[:4]:
        stats = await flows.flow_stats(str(path))
        result = await flows.classify_flow(str(path))
        print(f"\n  📌 {path.parent.name}")
        print(f"     Size: {stats['width']}x{stats['height']}, valid {stats['valid_fraction']:.2f}")
        print(f"     Magnitude: mean {stats['mean_magnitude']:.2f}, max {stats['max_magnitude']:.2f}")
        print(f"     Classified as: {result['predicted']}")

    # Step 3: Self-test
    print("\n" + "=" * 60)
    print("🔍 Self-test:")
    checks = await flows.run_selftest()
    for check in checks:
        mark = "✅" if check["passed"] else "❌"
        print(f"  {mark} {check['name']} ({check['detail']})")

    print("\n" + "=" * 60)
    if all(check["passed"] for check in checks):
        print("✅ All checks passed!")
    else:
        print("❌ Some checks failed")


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        asyncio.run(demo(Path(tmp)))
