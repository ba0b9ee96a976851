"""
Sanity Check Script

Validates a training run directory: echoed config, metric log and
checkpoints.

Usage:
    python sanity_check.py runs/desk
"""
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from src.config import ECHO_FILE, RunConfig, load_config_file
from src.data import load_checkpoint, read_metrics, restore_model
from src.errors import WdsrError


def main(run_dir: Path) -> int:
    print("=" * 70)
    print(f"  SANITY CHECK - {run_dir}")
    print("=" * 70)

    issues = []

    # 1. Echoed config
    print("\n[1] ECHOED CONFIG")
    print("-" * 70)
    cfg = None
    try:
        cfg = RunConfig.from_mapping(load_config_file(run_dir / ECHO_FILE), source=str(run_dir / ECHO_FILE))
        print(f"  Network:               {cfg.topology}/{cfg.family}/{cfg.normalization} x{cfg.scale}")
        print(f"  Blocks / width / r:    {cfg.n_blocks} / {cfg.width} / {cfg.expansion}")
        print(f"  lr0 / max_steps:       {cfg.lr0} / {cfg.max_steps}")
        print(f"  Seed:                  {cfg.seed}")
    except WdsrError as e:
        issues.append(f"config: {e}")
        print(f"  ⚠ {e}")

    # 2. Metric log
    print("\n[2] METRIC LOG")
    print("-" * 70)
    metrics_path = run_dir / "metrics.csv"
    rows = read_metrics(metrics_path) if metrics_path.is_file() else []
    losses = [r['train_l1'] for r in rows if r['train_l1'] is not None]
    psnrs = [(r['step'], r['val_psnr']) for r in rows if r['val_psnr'] is not None]
    steps = [r['step'] for r in rows]
    print(f"  Rows:                  {len(rows)}")
    print(f"  Train L1 points:       {len(losses)}")
    print(f"  Val PSNR points:       {len(psnrs)}")
    if not rows:
        issues.append("metrics.csv missing or empty")
    if steps != sorted(steps):
        issues.append("metric steps are not increasing")
    non_finite = sum(1 for v in losses if not math.isfinite(v))
    print(f"  Non-finite losses:     {non_finite} {'✓' if non_finite == 0 else '⚠'}")
    if non_finite:
        issues.append(f"{non_finite} non-finite training losses")
    if len(losses) >= 4:
        quarter = max(1, len(losses) // 4)
        head, tail = float(np.mean(losses[:quarter])), float(np.mean(losses[-quarter:]))
        trend = "✓" if tail < head else "⚠"
        print(f"  L1 first/last quarter: {head:.4f} -> {tail:.4f} {trend}")
        if tail >= head:
            issues.append("training L1 did not decrease")
    if psnrs:
        best_step, best = max(psnrs, key=lambda p: p[1])
        print(f"  Val PSNR last / best:  {psnrs[-1][1]:.2f} / {best:.2f} dB (step {best_step})")

    # 3. Checkpoints
    print("\n[3] CHECKPOINTS")
    print("-" * 70)
    ckpt_dir = run_dir / "checkpoints"
    files = sorted(ckpt_dir.glob("*.ckpt")) if ckpt_dir.is_dir() else []
    print(f"  Files:                 {len(files)}")
    if not files:
        issues.append("no checkpoints written")
    for path in files:
        try:
            ckpt = load_checkpoint(path)
            finite = all(np.isfinite(p).all() for p in ckpt.parameters.values())
            n_params = sum(p.size for p in ckpt.parameters.values())
            print(f"    - {path.name:<24} step {ckpt.step:>8}  {n_params:>10,} params "
                  f"{'✓' if finite else '⚠ non-finite'}")
            if not finite:
                issues.append(f"{path.name}: non-finite parameters")
        except WdsrError as e:
            issues.append(f"{path.name}: {e}")
            print(f"    - {path.name:<24} ⚠ {e}")

    latest = ckpt_dir / "latest.ckpt"
    if latest.is_file():
        try:
            ckpt = load_checkpoint(latest)
            model = restore_model(ckpt)
            print(f"  latest.ckpt restores:  {type(model).__name__} ✓")
            if cfg is not None and ckpt.config and ckpt.config.get('seed') != cfg.seed:
                issues.append("latest.ckpt config differs from the echoed config")
        except WdsrError as e:
            issues.append(f"latest.ckpt: {e}")

    # 4. Overall health
    print("\n[4] OVERALL HEALTH")
    print("-" * 70)
    if not issues:
        print("  ✓ All checks passed!")
        return_code = 0
    else:
        print("  ⚠ Issues found:")
        for issue in issues:
            print(f"    - {issue}")
        return_code = 1

    print("\n" + "=" * 70)
    print("  SANITY CHECK COMPLETE")
    print("=" * 70)
    return return_code


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print(__doc__)
        sys.exit(2)
    sys.exit(main(Path(sys.argv[1])))
