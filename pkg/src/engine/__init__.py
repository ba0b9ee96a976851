"""
Training Engine Package

Everything that drives a network: loss, optimizer, augmentation, the
training runner, evaluation, gradient checks and the experiments.

Modules:
- losses: l1_loss and psnr_rgb
- optim: AdamState / adam_step and the halving lr_schedule
- augment: the 8 dihedral patch transforms
- runner: TrainConfig, patch sampling with prefetch, Trainer
- evaluate: per-image model vs bicubic PSNR
- gradcheck: finite-difference checks of every backward rule
- experiment: plain / weight-norm / batch-norm sweep
- bench: WDSR vs EDSR-baseline inference timing
"""

from .augment import N_TRANSFORMS, apply_transform, augment, draw_transform, invert_transform
from .bench import BenchResult, bench_topologies, time_inference
from .evaluate import EvalReport, ImageScore, evaluate_model, predict, super_resolve
from .experiment import SweepResult, SweepVariant, default_variants, parse_variant, run_sweep, summarize_metrics
from .gradcheck import GRADCHECK_TOLERANCE, CheckResult, GradcheckReport, check_gradients, run_gradcheck
from .losses import format_psnr, l1_loss, psnr_rgb, quantize
from .optim import Adam, AdamState, adam_step, lr_schedule
from .runner import PatchSampler, TrainConfig, Trainer, TrainResult, loss_ema, train

__all__ = [
    'N_TRANSFORMS',
    'apply_transform',
    'augment',
    'draw_transform',
    'invert_transform',
    'BenchResult',
    'bench_topologies',
    'time_inference',
    'EvalReport',
    'ImageScore',
    'evaluate_model',
    'predict',
    'super_resolve',
    'SweepResult',
    'SweepVariant',
    'default_variants',
    'parse_variant',
    'run_sweep',
    'summarize_metrics',
    'GRADCHECK_TOLERANCE',
    'CheckResult',
    'GradcheckReport',
    'check_gradients',
    'run_gradcheck',
    'format_psnr',
    'l1_loss',
    'psnr_rgb',
    'quantize',
    'Adam',
    'AdamState',
    'adam_step',
    'lr_schedule',
    'PatchSampler',
    'TrainConfig',
    'Trainer',
    'TrainResult',
    'loss_ema',
    'train',
]
