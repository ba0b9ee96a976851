"""
Finite-Difference Gradient Checks

Compares every analytic backward rule against 64-bit central differences.
Each check reduces its op's output to a scalar with a fixed random weight
tensor (L = sum(W * f(inputs))), backpropagates once, then perturbs a
sample of entries of every input by +/- h.

Relative error of a tensor = max|analytic - numeric| / max(max|numeric|,
max|analytic|, 1e-8) over the sampled entries.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.autograd import Tensor, absolute, add, backward, mean, mul, no_grad, relu, sub, total
from src.models import FAMILIES, BlockSpec, NetSpec, build_model
from src.nn import (
    NORMALIZATIONS,
    BatchNormState,
    Conv2dParams,
    WeightNormParams,
    batch_norm_infer,
    batch_norm_train,
    conv2d,
    pixel_shuffle,
    pixel_unshuffle,
    weight_norm_effective,
)
from .losses import l1_loss

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-3
FD_STEP = 1e-5
DEFAULT_PROBES = 8

# tiny instantiation used for the network-level checks
TINY_WIDTH = 4
TINY_EXPANSION = 2
TINY_HW = 6


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tensors: int
    passed: bool


@dataclass
class GradcheckReport:
    tolerance: float = GRADCHECK_TOLERANCE
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    @property
    def max_rel_err(self) -> float:
        return max((r.max_rel_err for r in self.results), default=0.0)

    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def format_table(self) -> str:
        lines = [f"  {'Check':<40} {'Tensors':>8} {'Max rel err':>12}  Result", f"  {'-' * 70}"]
        for r in self.results:
            lines.append(
                f"  {r.name:<40} {r.tensors:>8} {r.max_rel_err:>12.2e}  {'PASS' if r.passed else 'FAIL'}"
            )
        lines.append(f"  {'-' * 70}")
        verdict = "PASS" if self.passed else f"FAIL ({len(self.failures())} failing)"
        lines.append(f"  {verdict}: max rel. err {self.max_rel_err:.2e} (tolerance {self.tolerance:.0e})")
        return "\n".join(lines)


# ========== Core ==========

def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(numeric), initial=0.0)), float(np.max(np.abs(analytic), initial=0.0)), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def _agree(p: float, q: float) -> bool:
    return abs(p - q) <= 1e-4 * max(abs(p), abs(q), 1e-3)


def check_gradients(
    name: str,
    fn: Callable[[], Tensor],
    inputs: Dict[str, Tensor],
    rng: np.random.Generator,
    probes: int = DEFAULT_PROBES,
    h: float = FD_STEP,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> CheckResult:
    """
    Check d(sum(W * fn()))/d(input) for every tensor in inputs.

    When the estimates at h and h/8 disagree the step straddles a ReLU or
    |x| kink; the estimate is then retaken at h/64 and the two smaller
    steps are compared instead.

    Args:
        name: Label for the report
        fn: Rebuilds the output from the current input data
        inputs: 64-bit tensors with requires_grad=True
        rng: Source of the weight tensor and of the probed indices
        probes: Entries sampled per input tensor
        h: Central-difference step
        tolerance: Pass threshold on the relative error

    Returns:
        CheckResult with the worst relative error over all inputs
    """
    for t in inputs.values():
        t.grad = None
    out = fn()
    weights = Tensor(rng.standard_normal(out.shape), dtype=np.float64)
    backward(total(mul(out, weights)) if out.ndim else mul(out, weights))

    def central(flat: np.ndarray, idx: int, step: float) -> float:
        original = flat[idx]
        with no_grad():
            flat[idx] = original + step
            plus = fn().data.copy()
            flat[idx] = original - step
            minus = fn().data.copy()
        flat[idx] = original
        return float(np.sum(weights.data * (plus - minus))) / (2.0 * step)

    worst = 0.0
    for label, t in inputs.items():
        analytic_full = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(probes, flat.size), replace=False)
        analytic = analytic_full.reshape(-1)[picks]
        numeric = np.empty(len(picks))
        for j, idx in enumerate(picks):
            coarse, fine = central(flat, idx, h), central(flat, idx, h / 8)
            if _agree(coarse, fine):
                numeric[j] = coarse
            else:
                finest = central(flat, idx, h / 64)
                numeric[j] = fine if _agree(fine, finest) else finest
        err = relative_error(analytic, numeric)
        logger.debug(f"  {name}/{label}: rel err {err:.2e}")
        worst = max(worst, err)
    return CheckResult(name=name, max_rel_err=worst, tensors=len(inputs), passed=worst <= tolerance)


def _param(rng: np.random.Generator, shape: Sequence[int], away_from_zero: bool = False) -> Tensor:
    data = rng.standard_normal(tuple(shape))
    if away_from_zero:
        # keeps ReLU / |x| kinks outside the finite-difference step
        data = np.sign(data) * (0.1 + np.abs(data))
    return Tensor(data, requires_grad=True, dtype=np.float64)


# ========== Op Checks ==========

def op_checks(rng: np.random.Generator, probes: int, tolerance: float) -> List[CheckResult]:
    results = []

    def run(name, fn, inputs):
        results.append(check_gradients(name, fn, inputs, rng, probes=probes, tolerance=tolerance))

    a, b, c = _param(rng, (2, 3, 4, 4)), _param(rng, (2, 3, 4, 4)), _param(rng, (3,))
    run("add", lambda: add(a, b), {'a': a, 'b': b})
    run("add (channel broadcast)", lambda: add(a, c), {'a': a, 'c': c})
    run("sub (channel broadcast)", lambda: sub(a, c), {'a': a, 'c': c})
    run("mul", lambda: mul(a, b), {'a': a, 'b': b})
    run("mul (channel broadcast)", lambda: mul(a, c), {'a': a, 'c': c})

    x = _param(rng, (2, 3, 4, 4), away_from_zero=True)
    run("relu", lambda: relu(x), {'x': x})
    run("abs", lambda: absolute(x), {'x': x})
    run("mean", lambda: mean(x), {'x': x})
    run("sum", lambda: total(x), {'x': x})

    for k in (1, 3, 5):
        xi, w, bias = _param(rng, (2, 3, 5, 6)), _param(rng, (4, 3, k, k)), _param(rng, (4,))
        run(f"conv2d {k}x{k}", lambda xi=xi, w=w, bias=bias: conv2d(xi, Conv2dParams(w, bias)),
            {'x': xi, 'weight': w, 'bias': bias})

    xs = _param(rng, (1, 8, 3, 3))
    run("pixel_shuffle x2", lambda: pixel_shuffle(xs, 2), {'x': xs})
    xu = _param(rng, (1, 2, 6, 6))
    run("pixel_unshuffle x3", lambda: pixel_unshuffle(xu, 3), {'x': xu})

    v, g, wb = _param(rng, (4, 3, 3, 3)), _param(rng, (4,)), _param(rng, (4,))
    run("weight_norm_effective", lambda: weight_norm_effective(WeightNormParams(v, g, wb)), {'v': v, 'g': g})

    xb, gamma, beta = _param(rng, (2, 3, 3, 3)), _param(rng, (3,)), _param(rng, (3,))
    run("batch_norm_train",
        lambda: batch_norm_train(xb, BatchNormState(gamma=gamma, beta=beta)),
        {'x': xb, 'gamma': gamma, 'beta': beta})
    running = dict(running_mean=rng.standard_normal(3).astype(np.float32),
                   running_var=rng.uniform(0.5, 2.0, 3).astype(np.float32))
    run("batch_norm_infer",
        lambda: batch_norm_infer(xb, BatchNormState(gamma=gamma, beta=beta, mode="infer", **running)),
        {'x': xb, 'gamma': gamma, 'beta': beta})

    pred = _param(rng, (2, 3, 4, 4))
    target = Tensor(pred.data + np.sign(rng.standard_normal(pred.shape)) * (0.1 + rng.random(pred.shape)),
                    dtype=np.float64)
    run("l1_loss", lambda: l1_loss(pred, target), {'pred': pred})
    return results


# ========== Network Checks ==========

def tiny_spec(family: str, normalization: str, topology: str = "wdsr", scale: int = 2,
              width: int = TINY_WIDTH) -> NetSpec:
    r = 1 if family == "vanilla" else TINY_EXPANSION
    return NetSpec(
        topology=topology,
        scale=scale,
        n_blocks=1,
        block=BlockSpec(family=family, w1=width, r=r, normalization=normalization),
    )


def shrink_spec(spec: NetSpec) -> NetSpec:
    """Same topology/family/normalization/scale, one block, at most TINY_WIDTH channels."""
    block = spec.block
    return NetSpec(
        topology=spec.topology,
        scale=spec.scale,
        n_blocks=1,
        block=BlockSpec(
            family=block.family,
            w1=min(block.w1, TINY_WIDTH),
            r=min(block.r, TINY_EXPANSION) if block.family != "vanilla" else 1,
            kernel=block.kernel,
            normalization=block.normalization,
            residual_scale=block.residual_scale,
        ),
        rgb_mean=spec.rgb_mean,
    )


def network_check(spec: NetSpec, rng: np.random.Generator, probes: int, tolerance: float,
                  hw: int = TINY_HW) -> CheckResult:
    model = build_model(spec, seed=int(rng.integers(2 ** 31))).to_dtype(np.float64).train()
    x = Tensor(rng.uniform(0.0, 255.0, (2, 3, hw, hw)), requires_grad=True, dtype=np.float64)
    inputs = {'input': x, **model.named_parameters()}
    label = f"{spec.topology}/{spec.block.family}/{spec.block.normalization}"
    return check_gradients(label, lambda: model(x), inputs, rng, probes=probes, tolerance=tolerance)


def run_gradcheck(
    spec: Optional[NetSpec] = None,
    families: Sequence[str] = FAMILIES,
    normalizations: Sequence[str] = NORMALIZATIONS,
    seed: int = 0,
    probes: int = DEFAULT_PROBES,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> GradcheckReport:
    """
    All op checks, every family x normalization on a tiny WDSR, a tiny
    EDSR-baseline, and a shrunken copy of spec when one is given.
    """
    rng = np.random.default_rng(seed)
    report = GradcheckReport(tolerance=tolerance)
    report.results.extend(op_checks(rng, probes, tolerance))
    for family in families:
        for normalization in normalizations:
            report.results.append(network_check(tiny_spec(family, normalization), rng, probes, tolerance))
    report.results.append(network_check(tiny_spec("vanilla", "plain", topology="edsr-baseline"),
                                        rng, probes, tolerance))
    if spec is not None:
        check = network_check(shrink_spec(spec), rng, probes, tolerance)
        check.name = f"configured {check.name}"
        report.results.append(check)
    logger.info(f"Gradcheck: {len(report.results)} checks, max rel err {report.max_rel_err:.2e}")
    return report
