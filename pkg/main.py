"""
wdsrkit - Main Entry Point

Subcommands:
    prepare     Crop + bicubic-downsample an HR folder, write manifests
    budget      Per-layer parameter / Mult-Add report of the configured network
    train       Train the configured network on a prepared dataset
    eval        Per-image PSNR of a checkpoint next to bicubic upsampling
    gradcheck   Finite-difference check of every backward rule
    sweep       Same network under plain / weight-norm / batch-norm
    bench       WDSR vs EDSR-baseline inference time + resolution audit

Usage:
    python main.py prepare data/hr data/desk --scale 2
    python main.py budget --set family=vanilla --set width=64 --set n_blocks=1
    python main.py train --config config/desk.yaml --out runs/desk
    python main.py eval runs/desk/checkpoints/latest.ckpt data/desk/val.tsv
    python main.py gradcheck

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure,
1 unexpected error, 130 interrupted.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

# Add src to path
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

logger = logging.getLogger(__name__)

BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INTERRUPTED = 130


def banner(title: str):
    print("\n" + "=" * 60)
    print(f"  {title}")
    print("=" * 60)


def cap_blas_threads():
    """Honour WDSRKIT_THREADS for BLAS before numpy is first imported (0 -> 1 thread)."""
    raw = os.environ.get("WDSRKIT_THREADS", "").strip()
    if not raw.isdigit():
        return
    for var in BLAS_THREAD_VARS:
        os.environ.setdefault(var, str(max(1, int(raw))))


def setup_logging(verbose: bool):
    from src.config import ConfigLoader

    level = "DEBUG" if verbose else ConfigLoader().get_logging_settings()["level"]
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def load_config(args):
    from src.config import load_run_config

    return load_run_config(args.config, args.set, seed=args.seed, out_dir=args.out)


def output_dir(cfg, command: str) -> Path:
    from src.config import ConfigLoader

    if cfg.out_dir:
        return Path(cfg.out_dir)
    return ConfigLoader().get_runtime_settings()["runs_root"] / command


def workers_for(cfg) -> int:
    from src.config import resolve_threads

    return resolve_threads(cfg.threads)


# ========== Commands ==========

def cmd_prepare(args) -> int:
    """Wrap prepare_dataset; print counts and the training-split rgb_mean."""
    from src.data import prepare_dataset

    cfg = load_config(args)
    scale = args.scale if args.scale is not None else cfg.scale
    out = Path(args.out_dir)
    workers = workers_for(cfg)

    banner(f"PREPARE x{scale}")
    train_manifest, val_manifest = prepare_dataset(
        args.hr_dir, out, scale, val_count=args.val_count, workers=max(1, workers),
    )
    cfg.merged({'scale': scale, 'out_dir': str(out)}).echo(out)
    mean = train_manifest.rgb_mean
    print(f"\n  Train pairs:  {len(train_manifest)}  ({train_manifest.path})")
    print(f"  Val pairs:    {len(val_manifest)}  ({val_manifest.path})")
    print(f"  rgb_mean:     ({mean[0]:.4f}, {mean[1]:.4f}, {mean[2]:.4f})")
    print(f"  Skipped:      see {out / 'prepare.log'}")
    return EXIT_OK


def cmd_budget(args) -> int:
    from src.models import budget_report

    cfg = load_config(args)
    spec = cfg.netspec()
    report = budget_report(spec, (cfg.budget_input_h, cfg.budget_input_w))

    banner("PARAMETER / MULT-ADD BUDGET")
    print(report.format_table())
    if args.out:
        cfg.echo(args.out)
    return EXIT_OK


def _load_sets(cfg):
    from src.data import SRDataset
    from src.errors import ConfigError

    if not cfg.train_manifest:
        raise ConfigError("train_manifest is not set (use --config or --set train_manifest=...)")
    train_set = SRDataset.from_path(cfg.train_manifest)
    val_set = SRDataset.from_path(cfg.val_manifest) if cfg.val_manifest else None
    if val_set is not None and len(val_set) == 0:
        val_set = None
    if train_set.scale != cfg.scale:
        raise ConfigError(f"manifest scale {train_set.scale} differs from configured scale {cfg.scale}")
    return train_set, val_set


def cmd_train(args) -> int:
    from src.data import MetricSink
    from src.engine import Trainer, loss_ema
    from src.models import build_model

    cfg = load_config(args)
    out = output_dir(cfg, "train")
    cfg = cfg.merged({'out_dir': str(out)})
    workers = workers_for(cfg)
    train_set, val_set = _load_sets(cfg)

    spec = cfg.netspec(rgb_mean=train_set.rgb_mean)
    model = build_model(spec, seed=cfg.seed).set_batch_norm(cfg.bn_momentum, cfg.bn_eps)
    tcfg = cfg.train_config(workers)

    banner(f"TRAIN {spec.topology}/{spec.block.family}/{spec.block.normalization} x{spec.scale}")
    cfg.echo(out)
    print(f"  Parameters:   {model.parameter_count():,}")
    print(f"  Train pairs:  {len(train_set)}   Val pairs: {len(val_set) if val_set else 0}")
    print(f"  Output:       {out}")

    sink = MetricSink(out / "metrics.csv")
    result = Trainer(model, train_set, tcfg, sink, out, val_set=val_set, config_echo=cfg.to_dict()).run()

    ema = loss_ema(result.losses)
    print(f"\n  Steps:        {result.steps}  ({result.seconds:.1f}s)")
    if len(ema):
        print(f"  L1 EMA:       {ema[0]:.4f} -> {ema[-1]:.4f}")
    if result.val_psnr:
        print(f"  Val PSNR:     {result.val_psnr[-1][1]:.2f} dB (step {result.val_psnr[-1][0]})")
    print(f"  Checkpoint:   {result.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    import csv

    from src.data import SRDataset, load_checkpoint, restore_model, save_image
    from src.engine import evaluate_model, super_resolve

    cfg = load_config(args)
    ckpt = load_checkpoint(args.checkpoint)
    model = restore_model(ckpt)
    dataset = SRDataset.from_path(args.manifest)

    banner(f"EVAL {Path(args.checkpoint).name} (step {ckpt.step})")
    report = evaluate_model(model, dataset, shave=cfg.psnr_shave, crop=args.crop)
    print(report.format_table())
    if args.out:
        out = Path(args.out)
        cfg.echo(out)
        with open(out / "eval.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=["image", "psnr_model", "psnr_bicubic"])
            writer.writeheader()
            writer.writerows(report.to_rows())
    if args.save_images:
        image_dir = Path(args.save_images)
        for name, (_, lr) in zip(dataset.names, dataset.pairs):
            save_image(super_resolve(model, lr), image_dir / f"{name}_x{dataset.scale}.png")
        logger.info(f"Saved {len(dataset)} super-resolved images to {image_dir}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from src.engine import run_gradcheck
    from src.errors import NumericalError

    cfg = load_config(args)
    banner("GRADIENT CHECK")
    report = run_gradcheck(cfg.netspec(), seed=cfg.seed)
    print(report.format_table())
    if args.out:
        cfg.echo(args.out)
    if not report.passed:
        names = ", ".join(r.name for r in report.failures())
        raise NumericalError(f"gradient check failed: {names}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from src.engine import default_variants, run_sweep
    from src.engine.experiment import format_summary

    cfg = load_config(args)
    out = output_dir(cfg, "sweep")
    cfg = cfg.merged({'out_dir': str(out)})
    workers = workers_for(cfg)
    train_set, val_set = _load_sets(cfg)
    spec = cfg.netspec(rgb_mean=train_set.rgb_mean)
    tcfg = cfg.train_config(workers)
    variants = default_variants(tcfg.lr0, args.extra)

    banner(f"NORMALIZATION SWEEP ({len(variants)} variants)")
    cfg.echo(out)
    results = run_sweep(spec, tcfg, variants, train_set, val_set, out, config_echo=cfg.to_dict())
    print(format_summary(results))
    print(f"\n  Summary:      {out / 'sweep_summary.csv'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from src.config import ConfigLoader
    from src.engine import bench_topologies

    cfg = load_config(args)
    repeats = args.repeats or ConfigLoader().get_runtime_settings()["bench_repeats"]
    banner("WDSR vs EDSR-BASELINE INFERENCE")
    result = bench_topologies(
        width=args.width or cfg.width,
        n_blocks=args.blocks or cfg.n_blocks,
        scale=cfg.scale,
        input_hw=(cfg.budget_input_h, cfg.budget_input_w),
        repeats=repeats,
        seed=cfg.seed,
    )
    print(result.format_table())
    if args.out:
        cfg.echo(args.out)
    return EXIT_OK


COMMANDS = {
    'prepare': cmd_prepare,
    'budget': cmd_budget,
    'train': cmd_train,
    'eval': cmd_eval,
    'gradcheck': cmd_gradcheck,
    'sweep': cmd_sweep,
    'bench': cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run config merged over config/run.yaml")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="Override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="Override the config seed")
    common.add_argument("--out", metavar="DIR", help="Output directory")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        description="wdsrkit - wide-activation super-resolution training engine",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py prepare data/hr data/desk --scale 2
  python main.py budget --set family=wdsr-b --set width=32 --set expansion=6 --set budget_width=64
  python main.py train --config config/desk.yaml
  python main.py eval runs/train/checkpoints/latest.ckpt data/desk/val.tsv
  python main.py gradcheck
  python main.py sweep --config config/desk.yaml --extra batch-norm@1e-4
  python main.py bench --width 64 --blocks 8
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="Build HR/LR pairs and manifests")
    p.add_argument("hr_dir", help="Directory of HR PNG images")
    p.add_argument("out_dir", help="Destination of HR/, LR_x{S}/ and the manifests")
    p.add_argument("--scale", type=int, help="Downscale factor (default: config scale)")
    p.add_argument("--val-count", type=int, help="Images held out for validation (default: 10%%)")

    sub.add_parser("budget", parents=[common], help="Parameter / Mult-Add report")
    sub.add_parser("train", parents=[common], help="Train the configured network")

    p = sub.add_parser("eval", parents=[common], help="PSNR of a checkpoint vs bicubic")
    p.add_argument("checkpoint", help="Checkpoint file")
    p.add_argument("manifest", help="Manifest of the pairs to score")
    p.add_argument("--crop", type=int, help="LR center-crop size (default: whole images)")
    p.add_argument("--save-images", metavar="DIR", help="Also write each full super-resolved image as PNG")

    sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")

    p = sub.add_parser("sweep", parents=[common], help="plain / weight-norm / batch-norm comparison")
    p.add_argument("--extra", metavar="NORM@LR", action="append", default=[],
                   help="Additional variant, e.g. batch-norm@1e-4 (repeatable)")

    p = sub.add_parser("bench", parents=[common], help="WDSR vs EDSR-baseline inference time")
    p.add_argument("--width", type=int, help="Body width (default: config width)")
    p.add_argument("--blocks", type=int, help="Residual blocks (default: config n_blocks)")
    p.add_argument("--repeats", type=int, help="Timed forward passes (default: settings.yaml)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cap_blas_threads()

    from src.errors import WdsrError

    try:
        setup_logging(args.verbose)
        code = COMMANDS[args.command](args)
        banner("COMPLETE")
        return code
    except WdsrError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        print("\n\nInterrupted by user.")
        return EXIT_INTERRUPTED
    except Exception:
        logger.exception("Unexpected error")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
