"""
Check a finished desk-scale run against its expected outcomes.

    python main.py prepare path/to/hr data/desk --scale 2 --val-count 4
    python main.py train --config config/desk.yaml --out runs/desk
    python main.py sweep --config config/desk.yaml --out runs/sweep
    python scripts/desk_acceptance.py runs/desk data/desk/val.tsv --sweep runs/sweep

Exit code 0 when every check passes, 1 otherwise.
"""

import argparse
import csv
import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from src.data import SRDataset, load_checkpoint, read_metrics, restore_model  # noqa: E402
from src.engine import bench_topologies, evaluate_model, loss_ema  # noqa: E402
from src.engine.experiment import SUMMARY_FILE  # noqa: E402


def report(ok: bool, text: str) -> bool:
    print(f"  {'✓' if ok else '✗'} {text}")
    return ok


def check_training(run_dir: Path, val_manifest: Path, margin: float) -> bool:
    print("\n[1] TRAINING")
    print("-" * 70)
    losses = [r['train_l1'] for r in read_metrics(run_dir / "metrics.csv") if r['train_l1'] is not None]
    if len(losses) < 4:
        return report(False, f"only {len(losses)} logged losses")
    ema = loss_ema(losses, span=max(2, len(losses) // 10))
    ok = report(ema[-1] < ema[len(ema) // 4], f"L1 EMA {ema[len(ema) // 4]:.3f} -> {ema[-1]:.3f}")

    model = restore_model(load_checkpoint(run_dir / "checkpoints" / "latest.ckpt"))
    scores = evaluate_model(model, SRDataset.from_path(val_manifest))
    gain = scores.mean_model - scores.mean_bicubic
    print(scores.format_table())
    ok &= report(gain > 0, f"beats bicubic by {gain:+.2f} dB")
    ok &= report(gain >= margin, f"margin >= {margin:.2f} dB")
    return ok


def check_sweep(sweep_dir: Path) -> bool:
    print("\n[2] NORMALIZATION SWEEP")
    print("-" * 70)
    with open(sweep_dir / SUMMARY_FILE, newline="", encoding="utf-8") as f:
        rows = {r['normalization']: r for r in csv.DictReader(f)}
    missing = {"plain", "weight-norm", "batch-norm"} - set(rows)
    if missing:
        return report(False, f"sweep lacks {', '.join(sorted(missing))}")

    plain, wn, bn = rows["plain"], rows["weight-norm"], rows["batch-norm"]
    plain_l1 = float("inf") if plain['diverged'] == "1" else float(plain['final_l1'])
    wn_l1 = float(wn['final_l1'])
    ok = report(wn['diverged'] == "0" and wn_l1 < plain_l1,
                f"weight-norm final L1 {wn_l1:.4f} vs plain {plain_l1:.4f}")

    wn_std, bn_std = wn['val_psnr_std_final_third'], bn['val_psnr_std_final_third']
    if not wn_std or not bn_std:
        return report(False, "validation PSNR std missing (raise max_steps or lower val_every)") and ok
    ok &= report(float(bn_std) > float(wn_std),
                 f"batch-norm val PSNR std {float(bn_std):.3f} > weight-norm {float(wn_std):.3f}")
    return ok


def check_resolution(width: int, n_blocks: int) -> bool:
    print("\n[3] RESOLUTION DISCIPLINE")
    print("-" * 70)
    result = bench_topologies(width=width, n_blocks=n_blocks, scale=2, input_hw=(64, 64), repeats=5)
    print(result.format_table())
    ok = report(not result.wdsr_non_lr, "every wdsr convolution runs at LR size")
    ok &= report(result.speedup > 1.0, f"wdsr faster than edsr-baseline ({result.speedup:.2f}x)")
    return ok


def main() -> int:
    parser = argparse.ArgumentParser(description="Desk-scale acceptance checks")
    parser.add_argument("run_dir", help="Output directory of `main.py train`")
    parser.add_argument("val_manifest", help="Held-out manifest")
    parser.add_argument("--sweep", help="Output directory of `main.py sweep`")
    parser.add_argument("--margin", type=float, default=0.3, help="Required dB over bicubic")
    parser.add_argument("--width", type=int, default=32)
    parser.add_argument("--blocks", type=int, default=8)
    args = parser.parse_args()

    print("=" * 70)
    print("DESK ACCEPTANCE")
    print("=" * 70)
    ok = check_training(Path(args.run_dir), Path(args.val_manifest), args.margin)
    if args.sweep:
        ok &= check_sweep(Path(args.sweep))
    ok &= check_resolution(args.width, args.blocks)

    print("\n" + "=" * 70)
    print("ALL CHECKS PASSED" if ok else "SOME CHECKS FAILED")
    print("=" * 70)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
