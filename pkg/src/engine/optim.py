"""
Adam optimizer and the step-halving learning-rate schedule.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from src.autograd import Tensor
from src.errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def __post_init__(self):
        for name, beta in (("adam_beta1", self.beta1), ("adam_beta2", self.beta2)):
            if not 0.0 < beta < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {beta}")
        if self.epsilon <= 0:
            raise ConfigError(f"adam_eps must be > 0, got {self.epsilon}")


def _check_finite(grads: Mapping[str, Optional[np.ndarray]]):
    bad = {}
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            bad[name] = int((~np.isfinite(g)).sum())
    if bad:
        details = ", ".join(f"{n} ({c} non-finite)" for n, c in sorted(bad.items()))
        raise NumericalError(f"adam_step aborted, non-finite gradients in: {details}")


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float,
):
    """
    One bias-corrected Adam update, in place.

    Parameters whose gradient is None (unused in this step's graph) are left
    alone. On any NaN/Inf gradient nothing is touched and NumericalError
    names the offending parameters.

    Args:
        params: name -> parameter tensor
        grads: name -> gradient array (same shape), or None
        state: Moments and step counter, updated in place
        lr: Step size for this update
    """
    _check_finite(grads)
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    step_size = lr / bc1

    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / bc2) + state.epsilon
        p.data -= (step_size * m / denom).astype(p.data.dtype)


class Adam:
    """Adam bound to a module's named parameters."""

    def __init__(self, named_params: Mapping[str, Tensor], lr: float = 1e-3,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, epsilon: float = ADAM_EPSILON):
        self.params = dict(named_params)
        self.lr = lr
        self.state = AdamState(beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self, lr: Optional[float] = None):
        grads = {name: p.grad for name, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr if lr is None else lr)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def lr_schedule(step: int, lr0: float, period: int) -> float:
    """lr0 * 0.5 ** floor(step / period)."""
    if period < 1:
        raise ConfigError(f"lr_halving_period must be >= 1, got {period}")
    return lr0 * 0.5 ** (step // period)
