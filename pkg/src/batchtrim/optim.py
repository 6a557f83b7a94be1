"""Parameter update rules (Adam, SGD with momentum) and step-decay learning
rates.

Weight decay is coupled L2 (added to the gradient before the moment updates),
the classic Adam formulation.  Updates are in place on the parameter arrays;
each optimizer state is owned by a single training run.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParameterError
from .tensor import Tensor


@dataclass(frozen=True)
class LrSchedule:
    """base_lr multiplied by gamma once per milestone epoch already reached.

    The decayed rate applies *at* the milestone: with milestones (50, 100)
    epoch 50 already trains at base_lr * gamma.
    """

    base_lr: float
    milestones: tuple[int, ...] = ()
    gamma: float = 0.5

    def __post_init__(self):
        ms = tuple(int(m) for m in self.milestones)
        object.__setattr__(self, "milestones", ms)
        if any(m < 1 for m in ms) or any(a >= b for a, b in zip(ms, ms[1:])):
            raise ParameterError(f"milestones must be strictly ascending and >= 1, got {ms}")
        if self.base_lr <= 0:
            raise ParameterError(f"base_lr must be > 0, got {self.base_lr}")


def lr_at_epoch(sched: LrSchedule, epoch: int) -> float:
    if epoch < 1:
        raise ContractError(f"epoch must be >= 1, got {epoch}")
    return sched.base_lr * sched.gamma ** bisect_right(sched.milestones, epoch)


def _check_aligned(params: list[Tensor], grads: list[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} params vs {len(grads)} grads")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"param shape {p.shape} vs grad shape {g.shape}")


@dataclass
class AdamState:
    """First/second moment accumulators; t counts completed steps."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "AdamState":
        return cls(m=[np.zeros(p.shape) for p in params],
                   v=[np.zeros(p.shape) for p in params])


def adam_step(state: AdamState, params: list[Tensor], grads: list[np.ndarray],
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    _check_aligned(params, grads)
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for i, (param, grad) in enumerate(zip(params, grads)):
        g = grad + weight_decay * param.array
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        param.array -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class SgdState:
    """Momentum velocity buffers."""

    velocity: list[np.ndarray]

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "SgdState":
        return cls(velocity=[np.zeros(p.shape) for p in params])


def sgd_step(state: SgdState, params: list[Tensor], grads: list[np.ndarray],
             lr: float, momentum: float = 0.9, weight_decay: float = 0.0) -> None:
    """One SGD-with-momentum update, in place on the parameter arrays."""
    _check_aligned(params, grads)
    for i, (param, grad) in enumerate(zip(params, grads)):
        g = grad + weight_decay * param.array
        state.velocity[i] = momentum * state.velocity[i] + g
        param.array -= lr * state.velocity[i]
