"""Loss-based mini-batch trimming: schedule, selection, trimmed mean, and
the gather-then-backward shortcut.

The training objective for a batch is the mean loss over only the hardest
fraction p of its samples, where hardness is the per-sample loss itself.
p anneals linearly from p_start in epoch 1 to p_end in the last epoch and is
constant within an epoch.  With p = 1 the objective is bit-identical to the
ordinary mini-batch mean, so a schedule pinned at 1.0 reproduces untrimmed
training exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ParameterError
from .model import LAYER_KINDS, Model, forward_per_sample_loss
from .tensor import Tensor, gather_rows


@dataclass(frozen=True)
class TrimSchedule:
    """Linear annealing of the kept fraction from p_start to p_end."""

    total_epochs: int
    p_start: float = 1.0
    p_end: float = 0.2

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ParameterError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if not 0.0 < self.p_end <= self.p_start <= 1.0:
            raise ParameterError(
                f"need 0 < p_end <= p_start <= 1, got p_start={self.p_start}, p_end={self.p_end}")


def fraction_at_epoch(sched: TrimSchedule, epoch: int) -> float:
    """Kept fraction for a 1-based epoch; hits both endpoints exactly."""
    if not 1 <= epoch <= sched.total_epochs:
        raise ContractError(f"epoch {epoch} outside [1, {sched.total_epochs}]")
    if epoch == 1 or sched.total_epochs == 1:
        return sched.p_start
    if epoch == sched.total_epochs:
        return sched.p_end
    step = (sched.p_end - sched.p_start) / (sched.total_epochs - 1)
    return sched.p_start + (epoch - 1) * step


def trim_count(batch_size: int, p: float) -> int:
    """k = max(1, ceil(p * B)): at least the requested fraction, never empty.

    Applied to the actual size of a batch, so a partial final batch is
    trimmed by its own size.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"p must be in (0, 1], got {p}")
    return max(1, math.ceil(p * batch_size))


@dataclass(frozen=True)
class TrimPlan:
    """Selection for one batch: keep `selected` (largest losses first).

    `selected` is ordered by descending loss with ties broken by ascending
    original index, i.e. a stable descending sort truncated at k.
    """

    p: float
    k: int
    selected: np.ndarray = field(repr=False)

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=np.int64)
        object.__setattr__(self, "selected", sel)
        if self.k != sel.shape[0] or self.k < 1:
            raise ContractError(f"k={self.k} does not match {sel.shape[0]} selected indices")


def select_topk(losses, k: int, p: float | None = None) -> TrimPlan:
    """Indices of the k largest losses (stable: equal losses keep index order)."""
    values = losses.array if isinstance(losses, Tensor) else np.asarray(losses, dtype=np.float64)
    if values.ndim != 1:
        raise ContractError(f"losses must be rank-1, got shape {values.shape}")
    batch = values.shape[0]
    if not 1 <= k <= batch:
        raise ContractError(f"k={k} outside [1, {batch}]")
    order = np.lexsort((np.arange(batch), -values))
    return TrimPlan(p=(k / batch if p is None else p), k=k, selected=order[:k])


def full_plan(batch_size: int, p: float = 1.0) -> TrimPlan:
    """Keep-everything plan; the trimming-disabled path uses this directly
    (no sorting), which is what makes disabled vs p=1.0 runs bit-identical."""
    return TrimPlan(p=p, k=batch_size, selected=np.arange(batch_size, dtype=np.int64))


def trimmed_mean(tape: ad.Tape, losses_id: int, plan: TrimPlan) -> int:
    """Append the scalar trimmed-mean node for the planned selection."""
    return ad.trimmed_mean(tape, losses_id, plan.selected, plan.k)


def subset_recompute_gradients(model: Model, x: Tensor, labels, plan: TrimPlan) -> dict[str, np.ndarray]:
    """Parameter gradients via forward + backward on only the selected rows.

    Because no layer couples samples within a batch, running the mean-loss
    backward on the gathered sub-batch returns the same gradients as the
    masked trimmed-mean backward over the full batch, while touching only
    k of B samples.  Guarded so a future batch-coupled layer cannot be
    silently mis-trained through this path.
    """
    for layer in model.layers:
        if layer.kind not in LAYER_KINDS:
            raise ContractError(
                f"subset recompute requires per-sample layers, got {layer.kind!r}")
    sub_x = gather_rows(x, plan.selected)
    sub_labels = np.asarray(labels, dtype=np.int64)[plan.selected]
    tape = ad.Tape()
    psl = forward_per_sample_loss(tape, model, sub_x, sub_labels)
    root = trimmed_mean(tape, psl.node_id, full_plan(plan.k, p=plan.p))
    ad.backward(tape, root)
    return {name: tape.grad(psl.param_nodes[name]).copy() for name, _ in model.parameters()}
