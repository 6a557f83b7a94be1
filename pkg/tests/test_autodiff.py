"""Tape and backward-pass tests, checked against finite differences."""

import numpy as np
import pytest

from batchtrim import autodiff as ad
from batchtrim.errors import ContractError, LabelError
from batchtrim.model import forward_per_sample_loss, init_params, mlp3
from batchtrim.rng import Prng, randn
from batchtrim.tensor import Tensor, create


def _vector(tape, values):
    return ad.input_node(tape, Tensor(np.asarray(values, dtype=np.float64)))


def test_relu_forward():
    tape = ad.Tape()
    out = ad.relu(tape, _vector(tape, [-1.0, 2.0]))
    assert np.array_equal(tape.value(out), [0.0, 2.0])


def test_add_bias_forward():
    tape = ad.Tape()
    x = ad.input_node(tape, Tensor(np.array([[1.0, 1.0]])))
    b = _vector(tape, [1.0, 2.0])
    out = ad.add_bias(tape, x, b)
    assert np.array_equal(tape.value(out), [[2.0, 3.0]])


def test_matmul_node_delegates_to_kernel():
    from batchtrim.tensor import matmul as kernel_matmul

    a = randn(Prng(1), [3, 4])
    b = randn(Prng(2), [4, 2])
    tape = ad.Tape()
    out = ad.matmul(tape, ad.input_node(tape, a), ad.input_node(tape, b))
    assert np.array_equal(tape.value(out), kernel_matmul(a, b).array)


def test_node_ids_are_contiguous_and_topological():
    tape = ad.Tape()
    x = _vector(tape, [1.0, -2.0, 3.0])
    y = ad.relu(tape, x)
    z = ad.scalar_scale(tape, y, 2.0)
    assert [n.id for n in tape.nodes] == [0, 1, 2]
    assert all(i < n.id for n in tape.nodes for i in n.inputs)
    assert z == 2


def _sum_node(tape, vec_id, n):
    """sum(v) expressed as n * mean(v); gives each element upstream grad 1."""
    mean = ad.trimmed_mean(tape, vec_id, np.arange(n), n)
    return ad.scalar_scale(tape, mean, float(n))


def test_backward_of_sum_is_ones():
    tape = ad.Tape()
    w = _vector(tape, [3.0, -1.0, 2.0, 7.0])
    root = _sum_node(tape, w, 4)
    ad.backward(tape, root)
    assert np.array_equal(tape.grad(w), np.ones(4))


def test_relu_backward_masks_negatives():
    tape = ad.Tape()
    x = _vector(tape, [-1.0, 2.0])
    y = ad.relu(tape, x)
    root = _sum_node(tape, y, 2)
    ad.backward(tape, root)
    assert np.array_equal(tape.grad(x), [0.0, 1.0])


def test_relu_subgradient_at_zero_is_zero():
    tape = ad.Tape()
    x = _vector(tape, [0.0, 1.0])
    root = _sum_node(tape, ad.relu(tape, x), 2)
    ad.backward(tape, root)
    assert np.array_equal(tape.grad(x), [0.0, 1.0])


def test_backward_rejects_non_scalar_root():
    tape = ad.Tape()
    x = _vector(tape, [1.0, 2.0])
    with pytest.raises(ContractError):
        ad.backward(tape, x)


def test_backward_idempotent():
    prng = Prng(3)
    model = init_params(mlp3(5, 3), prng)
    x = randn(prng, [4, 5])
    tape = ad.Tape()
    psl = forward_per_sample_loss(tape, model, x, [0, 1, 2, 0])
    root = ad.trimmed_mean(tape, psl.node_id, np.arange(4), 4)
    ad.backward(tape, root)
    first = {name: tape.grad(nid).copy() for name, nid in psl.param_nodes.items()}
    ad.backward(tape, root)
    for name, nid in psl.param_nodes.items():
        assert np.array_equal(tape.grad(nid), first[name])


def test_scaling_root_scales_every_gradient():
    """grad(c * L) must equal c * grad(L) within 1e-12 relative.

    Scaling commutes with backward only up to multiplication ordering, so
    elements that nearly cancel are measured against the tensor's gradient
    scale rather than their own cancelled magnitude.
    """
    prng = Prng(4)
    model = init_params(mlp3(6, 3), prng)
    x = randn(prng, [5, 6])
    labels = [0, 1, 2, 1, 0]
    c = 3.7

    def run(scale):
        tape = ad.Tape()
        psl = forward_per_sample_loss(tape, model, x, labels)
        root = ad.trimmed_mean(tape, psl.node_id, np.arange(5), 5)
        if scale is not None:
            root = ad.scalar_scale(tape, root, scale)
        ad.backward(tape, root)
        return {name: tape.grad(nid) for name, nid in psl.param_nodes.items()}

    plain = run(None)
    scaled = run(c)
    for name in plain:
        a, b = scaled[name], c * plain[name]
        floor = np.max(np.abs(b))
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        assert np.max(np.abs(a - b) / denom) < 1e-12, name


def test_gather_rows_backward_scatters():
    tape = ad.Tape()
    x = ad.input_node(tape, Tensor(np.array([1.0, 2.0, 3.0])))
    gathered = ad.gather_rows(tape, x, [2, 0, 2])
    root = _sum_node(tape, gathered, 3)
    ad.backward(tape, root)
    # row 2 gathered twice accumulates grad 2, row 1 untouched stays 0
    assert np.array_equal(tape.grad(x), [1.0, 0.0, 2.0])


def test_softmax_ce_rejects_bad_labels():
    tape = ad.Tape()
    logits = ad.input_node(tape, Tensor(np.zeros((2, 3))))
    with pytest.raises(LabelError):
        ad.softmax_ce_per_sample(tape, logits, [0, 3])


# --- finite-difference verification ----------------------------------------

def test_central_difference_quadratic_closed_form():
    """d/dx x^2 at x=3 is exactly 6; the estimator must agree to 1e-8."""
    fd = ad.central_difference(lambda t: t * t, 3.0, 1e-5)
    assert abs(fd - 6.0) < 1e-8


def test_relative_error_zero_guard():
    assert ad.relative_error(0.0, 0.0) == 0.0
    assert ad.relative_error(1e-12, 0.0) < 1e-3  # guarded by the 1e-8 floor


def test_grad_check_mlp_passes_tolerance():
    prng = Prng(6)
    model = init_params(mlp3(8, 4), prng)
    x = randn(prng, [4, 8])
    report = ad.grad_check(model, x, [0, 1, 2, 3], h=1e-5, tol=1e-4, seed=11)
    assert report.passed, report.max_rel_err
    assert set(report.max_rel_err) == {name for name, _ in model.parameters()}


def test_grad_check_agrees_tightly_on_smooth_region():
    """With no relu kink nearby, FD and autodiff agree far below the 1e-4 gate."""
    prng = Prng(12)
    model = init_params(mlp3(4, 3), prng)
    x = randn(prng, [2, 4])
    report = ad.grad_check(model, x, [0, 1], h=1e-5, tol=1e-4, seed=13)
    assert report.worst < 1e-5


def test_grad_check_rejects_bad_h():
    model = init_params(mlp3(4, 3), Prng(1))
    with pytest.raises(ContractError):
        ad.grad_check(model, randn(Prng(2), [2, 4]), [0, 1], h=0.0)
