"""
Normalization Sweep

Trains the same tiny network once per (normalization, lr0) variant with
identical seeds and data, then summarizes each run:

- final_l1: mean of the last 10% of logged training-loss rows
- val_psnr_std: standard deviation of validation PSNR over the final
  third of training (the test-time stability measure)

A variant that blows up is recorded as diverged instead of aborting the
whole sweep.
"""

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from src.data import MetricSink, SRDataset
from src.errors import ConfigError, NumericalError
from src.models import NetSpec, build_model
from src.nn import NORMALIZATIONS
from .runner import TrainConfig, Trainer

logger = logging.getLogger(__name__)

SUMMARY_FILE = "sweep_summary.csv"
SUMMARY_COLUMNS = [
    "variant", "normalization", "lr0", "steps", "diverged",
    "final_l1", "val_psnr_last", "val_psnr_std_final_third",
]


@dataclass(frozen=True)
class SweepVariant:
    normalization: str
    lr0: float

    @property
    def label(self) -> str:
        return f"{self.normalization}@{self.lr0:g}"


@dataclass
class SweepResult:
    variant: SweepVariant
    steps: int
    diverged: bool
    final_l1: float
    val_psnr_last: Optional[float]
    val_psnr_std: Optional[float]


def parse_variant(text: str) -> SweepVariant:
    """'batch-norm@1e-4' -> SweepVariant('batch-norm', 1e-4)"""
    normalization, sep, lr = text.partition("@")
    if not sep or normalization not in NORMALIZATIONS:
        raise ConfigError(f"sweep variant must look like <normalization>@<lr>, got {text!r}")
    try:
        return SweepVariant(normalization, float(lr))
    except ValueError as e:
        raise ConfigError(f"sweep variant {text!r}: bad learning rate") from e


def default_variants(lr0: float, extra: Sequence[str] = ()) -> List[SweepVariant]:
    variants = [SweepVariant(n, lr0) for n in NORMALIZATIONS]
    for text in extra:
        variant = parse_variant(text)
        if variant not in variants:
            variants.append(variant)
    return variants


def summarize_metrics(rows: List[dict], max_steps: int) -> dict:
    """final_l1 / val_psnr_last / val_psnr_std from metric-sink rows."""
    losses = [r['train_l1'] for r in rows if r['train_l1'] is not None]
    tail = max(1, int(math.ceil(len(losses) * 0.1))) if losses else 0
    final_l1 = float(np.mean(losses[-tail:])) if losses else math.nan

    vals = [(r['step'], r['val_psnr']) for r in rows if r['val_psnr'] is not None]
    last_third = [v for step, v in vals if step > max_steps * 2.0 / 3.0 and math.isfinite(v)]
    return {
        'final_l1': final_l1,
        'val_psnr_last': vals[-1][1] if vals else None,
        'val_psnr_std': float(np.std(last_third)) if len(last_third) >= 2 else None,
    }


def run_variant(spec: NetSpec, cfg: TrainConfig, variant: SweepVariant, train_set: SRDataset,
                val_set: Optional[SRDataset], out_dir: Path, config_echo: Optional[dict] = None) -> SweepResult:
    run_dir = out_dir / variant.label
    vspec = replace(spec, block=replace(spec.block, normalization=variant.normalization))
    vcfg = replace(cfg, normalization=variant.normalization, lr0=variant.lr0)
    model = build_model(vspec, seed=vcfg.seed)
    sink = MetricSink(run_dir / "metrics.csv")
    echo = dict(config_echo or {}, normalization=variant.normalization, lr0=variant.lr0)
    trainer = Trainer(model, train_set, vcfg, sink, run_dir, val_set=val_set, config_echo=echo)

    diverged = False
    try:
        trainer.run()
    except NumericalError as e:
        diverged = True
        logger.warning(f"{variant.label} diverged at step {trainer.step}: {e}")

    summary = summarize_metrics(sink.rows, vcfg.max_steps)
    return SweepResult(
        variant=variant,
        steps=trainer.step,
        diverged=diverged,
        final_l1=math.inf if diverged else summary['final_l1'],
        val_psnr_last=summary['val_psnr_last'],
        val_psnr_std=summary['val_psnr_std'],
    )


def run_sweep(spec: NetSpec, cfg: TrainConfig, variants: Sequence[SweepVariant], train_set: SRDataset,
              val_set: Optional[SRDataset], out_dir, config_echo: Optional[dict] = None) -> List[SweepResult]:
    """
    Train every variant with the same seed and write sweep_summary.csv.

    Returns:
        One SweepResult per variant, in order
    """
    out_dir = Path(out_dir)
    results = []
    for i, variant in enumerate(variants, start=1):
        logger.info(f"[{i}/{len(variants)}] sweep variant {variant.label}")
        results.append(run_variant(spec, cfg, variant, train_set, val_set, out_dir, config_echo))
    write_summary(results, out_dir / SUMMARY_FILE)
    return results


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6g}"
    return str(value)


def write_summary(results: Sequence[SweepResult], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        for r in results:
            writer.writerow([
                r.variant.label, r.variant.normalization, _cell(r.variant.lr0), r.steps,
                int(r.diverged), _cell(r.final_l1), _cell(r.val_psnr_last), _cell(r.val_psnr_std),
            ])
    return path


def format_summary(results: Sequence[SweepResult]) -> str:
    lines = [f"  {'Variant':<22} {'Steps':>7} {'Final L1':>10} {'Val PSNR':>9} {'PSNR std':>9}", f"  {'-' * 62}"]
    for r in results:
        final = "diverged" if r.diverged else f"{r.final_l1:.4f}"
        last = "" if r.val_psnr_last is None else f"{r.val_psnr_last:.2f}"
        std = "" if r.val_psnr_std is None else f"{r.val_psnr_std:.3f}"
        lines.append(f"  {r.variant.label:<22} {r.steps:>7} {final:>10} {last:>9} {std:>9}")
    return "\n".join(lines)
