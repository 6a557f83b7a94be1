"""Reverse-mode autodiff over an append-only tape of primitive operations.

A Tape belongs to exactly one training step.  Nodes reference only earlier
nodes, so the tape is already in topological order and `backward` is a single
reverse sweep.  Gradients accumulate per node; `backward` clears all grads
first, making repeated calls idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import tensor as tz
from .errors import ContractError, LabelError, ShapeError
from .rng import Prng, permutation
from .tensor import Tensor

OP_KINDS = frozenset({
    "input", "matmul", "add_bias", "relu", "conv2d", "maxpool2", "flatten",
    "softmax_ce_per_sample", "trimmed_mean", "gather_rows", "scalar_scale",
})


@dataclass
class Node:
    id: int
    op: str
    inputs: tuple[int, ...]
    value: Tensor
    aux: Any = None
    grad: np.ndarray | None = None


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)

    def append(self, op: str, inputs: tuple[int, ...], value: Tensor, aux: Any = None) -> int:
        assert op in OP_KINDS, op
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise ContractError(f"input id {i} not on tape")
        node = Node(id=len(self.nodes), op=op, inputs=inputs, value=value, aux=aux)
        self.nodes.append(node)
        return node.id

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def value(self, node_id: int) -> np.ndarray:
        return self.nodes[node_id].value.array

    def grad(self, node_id: int) -> np.ndarray | None:
        return self.nodes[node_id].grad


# ---------------------------------------------------------------------------
# forward ops
# ---------------------------------------------------------------------------

def input_node(tape: Tape, value: Tensor) -> int:
    return tape.append("input", (), value)


def matmul(tape: Tape, a: int, b: int) -> int:
    value = tz.matmul(tape.node(a).value, tape.node(b).value)
    return tape.append("matmul", (a, b), value)


def add_bias(tape: Tape, x: int, bias: int) -> int:
    value = tz.add_bias(tape.node(x).value, tape.node(bias).value)
    return tape.append("add_bias", (x, bias), value)


def relu(tape: Tape, x: int) -> int:
    value = Tensor(np.maximum(tape.value(x), 0.0))
    return tape.append("relu", (x,), value)


def conv2d(tape: Tape, x: int, w: int, bias: int) -> int:
    value = tz.conv2d_forward(tape.node(x).value, tape.node(w).value, tape.node(bias).value)
    return tape.append("conv2d", (x, w, bias), value)


def maxpool2(tape: Tape, x: int) -> int:
    value, argmax = tz.maxpool2_forward(tape.node(x).value)
    return tape.append("maxpool2", (x,), value, aux=argmax)


def flatten(tape: Tape, x: int) -> int:
    arr = tape.value(x)
    value = Tensor(arr.reshape(arr.shape[0], -1))
    return tape.append("flatten", (x,), value, aux=arr.shape)


def softmax_ce_per_sample(tape: Tape, logits: int, labels) -> int:
    """Per-sample cross-entropy from logits [B, C] and integer labels [B].

    loss_i = logsumexp(logits_i) - logits_i[label_i], stabilized by max
    subtraction.  No averaging happens here; trimming decides later which
    samples contribute to the scalar objective.
    """
    arr = tape.value(logits)
    if arr.ndim != 2:
        raise ShapeError(f"softmax_ce needs rank-2 logits, got {arr.shape}")
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != arr.shape[0]:
        raise ShapeError(f"{y.shape[0]} labels for {arr.shape[0]} logit rows")
    if y.size and (y.min() < 0 or y.max() >= arr.shape[1]):
        raise LabelError(f"labels must lie in [0, {arr.shape[1]})")
    shifted = arr - arr.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    sumexp = expv.sum(axis=1)
    losses = np.log(sumexp) - shifted[np.arange(arr.shape[0]), y]
    probs = expv / sumexp[:, None]
    return tape.append("softmax_ce_per_sample", (logits,), Tensor(losses), aux=(y, probs))


def trimmed_mean(tape: Tape, losses: int, selected, k: int) -> int:
    """Scalar mean of the selected entries of a rank-1 loss vector.

    The sum runs over the selected indices in ascending index order, so with
    k == B this is bit-identical to the plain mini-batch mean.  The selection
    is a constant of the backward pass: grad is 1/k on selected entries and 0
    elsewhere.
    """
    arr = tape.value(losses)
    if arr.ndim != 1:
        raise ShapeError(f"trimmed_mean needs a rank-1 vector, got {arr.shape}")
    idx = tz.check_row_indices(selected, arr.shape[0])
    if not 1 <= k <= arr.shape[0] or idx.shape[0] != k:
        raise ContractError(f"k={k} invalid for {idx.shape[0]} selected of {arr.shape[0]}")
    ascending = np.sort(idx)
    value = np.sum(arr[ascending]) / k
    return tape.append("trimmed_mean", (losses,), Tensor(np.array([value])), aux=(ascending, k))


def gather_rows(tape: Tape, x: int, idx) -> int:
    indices = tz.check_row_indices(idx, tape.value(x).shape[0])
    value = tz.gather_rows(tape.node(x).value, indices)
    return tape.append("gather_rows", (x,), value, aux=indices)


def scalar_scale(tape: Tape, x: int, c: float) -> int:
    value = Tensor(float(c) * tape.value(x))
    return tape.append("scalar_scale", (x,), value, aux=float(c))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _accumulate(node: Node, contribution: np.ndarray) -> None:
    if node.grad is None:
        node.grad = contribution
    else:
        node.grad += contribution


def backward(tape: Tape, root: int) -> None:
    """Populate node.grad for every node the scalar root depends on.

    All grads are reset first, then accumulated in reverse tape order.
    Pass-through ops copy the upstream array so no two nodes alias one
    gradient buffer.
    """
    root_node = tape.node(root)
    if root_node.value.shape != (1,):
        raise ContractError(f"backward root must have shape (1,), got {root_node.value.shape}")
    for node in tape.nodes:
        node.grad = None
    root_node.grad = np.ones(1)

    for node in reversed(tape.nodes[:root + 1]):
        g = node.grad
        if g is None or node.op == "input":
            continue
        ins = [tape.node(i) for i in node.inputs]
        if node.op == "matmul":
            a, b = ins
            _accumulate(a, g @ b.value.array.T)
            _accumulate(b, a.value.array.T @ g)
        elif node.op == "add_bias":
            _accumulate(ins[0], g.copy())
            _accumulate(ins[1], g.sum(axis=0))
        elif node.op == "relu":
            _accumulate(ins[0], g * (ins[0].value.array > 0.0))
        elif node.op == "conv2d":
            x, w, _ = ins
            gx, gw, gb = tz.conv2d_backward(x.value.array, w.value.array, g)
            _accumulate(ins[0], gx)
            _accumulate(ins[1], gw)
            _accumulate(ins[2], gb)
        elif node.op == "maxpool2":
            _accumulate(ins[0], tz.maxpool2_backward(node.aux, g, ins[0].value.shape))
        elif node.op == "flatten":
            _accumulate(ins[0], g.reshape(node.aux).copy())
        elif node.op == "softmax_ce_per_sample":
            y, probs = node.aux
            glogits = probs.copy()
            glogits[np.arange(y.shape[0]), y] -= 1.0
            glogits *= g[:, None]
            _accumulate(ins[0], glogits)
        elif node.op == "trimmed_mean":
            ascending, k = node.aux
            gl = np.zeros_like(ins[0].value.array)
            gl[ascending] = g[0] / k
            _accumulate(ins[0], gl)
        elif node.op == "gather_rows":
            gx = np.zeros_like(ins[0].value.array)
            np.add.at(gx, node.aux, g)
            _accumulate(ins[0], gx)
        elif node.op == "scalar_scale":
            _accumulate(ins[0], node.aux * g)
        else:  # pragma: no cover
            raise ContractError(f"no backward rule for op {node.op!r}")


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

def relative_error(a: float, b: float) -> float:
    """|a - b| / max(|a|, |b|, 1e-8); zero when both values are zero."""
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def central_difference(f, x: float, h: float) -> float:
    """(f(x+h) - f(x-h)) / (2h), the oracle backward() is checked against."""
    if h <= 0:
        raise ContractError(f"h must be > 0, got {h}")
    return (f(x + h) - f(x - h)) / (2.0 * h)


@dataclass
class GradCheckReport:
    """Max relative autodiff-vs-finite-difference error per parameter."""

    max_rel_err: dict[str, float]
    tol: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values())

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def grad_check(model, x: Tensor, labels, h: float = 1e-5, tol: float = 1e-4,
               max_elements: int = 50, seed: int = 0) -> GradCheckReport:
    """Compare autodiff parameter gradients against central differences.

    The objective is the plain mean of the per-sample losses.  Parameter
    tensors larger than max_elements are subsampled deterministically
    (at least max_elements elements each).  Note: a relu input within h of
    zero can inflate the finite-difference error past tol; fixed test seeds
    keep clear of that.
    """
    from .model import forward_per_sample_loss

    if h <= 0:
        raise ContractError(f"h must be > 0, got {h}")

    def loss_value() -> float:
        tape = Tape()
        psl = forward_per_sample_loss(tape, model, x, labels)
        batch = psl.values.shape[0]
        root = trimmed_mean(tape, psl.node_id, np.arange(batch), batch)
        return float(tape.value(root)[0])

    tape = Tape()
    psl = forward_per_sample_loss(tape, model, x, labels)
    batch = psl.values.shape[0]
    root = trimmed_mean(tape, psl.node_id, np.arange(batch), batch)
    backward(tape, root)
    grads = {name: tape.grad(psl.param_nodes[name]) for name, _ in model.parameters()}

    prng = Prng(seed)
    report: dict[str, float] = {}
    for name, param in model.parameters():
        flat = param.array.reshape(-1)
        gflat = grads[name].reshape(-1)
        if flat.size <= max_elements:
            picks = np.arange(flat.size)
        else:
            picks = permutation(prng, flat.size)[:max_elements]
        worst = 0.0
        for i in picks:
            saved = flat[i]
            flat[i] = saved + h
            plus = loss_value()
            flat[i] = saved - h
            minus = loss_value()
            flat[i] = saved
            fd = (plus - minus) / (2.0 * h)
            worst = max(worst, relative_error(fd, gflat[i]))
        report[name] = worst
    return GradCheckReport(max_rel_err=report, tol=tol)
