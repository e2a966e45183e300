"""
Run every experiment in sequence:
1. Calibrate gamma* for the configured N and load
2. Quantization, pruning, noise, scaling and gamma sweeps at gamma*
3. Walsh influence, weight histogram and the load 2.0 replication
4. Check the qualitative claims (report.txt)

Usage: python3 scripts/run_all.py [OUT_DIR] [TRIALS] [WORKERS]
"""

import json
import os
import sys
from datetime import datetime
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cli import parse_and_dispatch


def run_step(label: str, argv: list) -> bool:
    print(label)
    print("-" * 60)
    code = parse_and_dispatch(argv)
    if code == 0:
        print(f"✓ {argv[0]} done")
    else:
        print(f"✗ {argv[0]} failed (exit {code}), continuing...")
    print()
    return code == 0


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "results"
    trials = sys.argv[2] if len(sys.argv) > 2 else "10"
    workers = sys.argv[3] if len(sys.argv) > 3 else "-1"
    common = ["--out", out_dir, "--trials", trials, "--workers", workers]

    print("=" * 60)
    print("Kernel Hopfield Memory - Full Experiment Run")
    print("=" * 60)
    print(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print("=" * 60)
    print()

    if not run_step("STEP 1: Calibrating gamma*...", ["calibrate"] + common):
        print("✗ Calibration failed, aborting")
        sys.exit(1)
    with open(os.path.join(out_dir, "calibration_manifest.json"), "r", encoding="utf-8") as f:
        gamma_star = json.load(f)["gamma_star"]
    print(f"Using gamma* = {gamma_star}")
    print()
    ridge = common + ["--gamma", str(gamma_star)]

    steps = [
        ("STEP 2: Quantization sweep...", ["quantize-sweep"] + ridge),
        ("STEP 3: Pruning sweep...", ["prune-sweep"] + ridge),
        ("STEP 4: Noise sweep...", ["noise-sweep"] + ridge),
        ("STEP 5: Scaling on the Ridge...", ["scaling", "--regime", "ridge"] + ridge),
        ("STEP 6: Scaling in the local regime...", ["scaling", "--regime", "local"] + common),
        ("STEP 7: Gamma sweep...", ["gamma-sweep"] + ridge),
        ("STEP 8: Walsh influence (L2 vs L1)...", ["walsh"] + ridge),
        ("STEP 9: Weight histogram...", ["histogram"] + ridge),
        ("STEP 10: Replication at P/N = 2.0...", ["replicate-pn2"] + common),
    ]
    failed = [argv[0] for label, argv in steps if not run_step(label, argv)]

    run_step("STEP 11: Checking claims...", ["report", "--out", out_dir])

    print("=" * 60)
    print("Experiment run complete!" if not failed else f"Finished with failures: {', '.join(failed)}")
    print("=" * 60)
    print(f"Finished at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print()


if __name__ == "__main__":
    main()
