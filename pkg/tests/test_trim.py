"""Trimming tests: schedule, selection vs a brute-force oracle, the exact
gradient contract, and the gather-then-backward equivalence."""

import numpy as np
import pytest

from batchtrim import autodiff as ad
from batchtrim.errors import ContractError, ParameterError
from batchtrim.model import Layer, Model, forward_per_sample_loss, init_params, mlp3, tinycnn
from batchtrim.rng import Prng, randn
from batchtrim.tensor import Tensor
from batchtrim.trim import (
    TrimSchedule,
    fraction_at_epoch,
    full_plan,
    select_topk,
    subset_recompute_gradients,
    trim_count,
    trimmed_mean,
)


# --- schedule ----------------------------------------------------------------

def test_schedule_first_epoch_is_p_start():
    assert fraction_at_epoch(TrimSchedule(150), 1) == 1.0


def test_schedule_last_epoch_is_p_end():
    assert fraction_at_epoch(TrimSchedule(150), 150) == 0.2


def test_schedule_midpoint():
    assert fraction_at_epoch(TrimSchedule(3), 2) == pytest.approx(0.6, abs=1e-15)


def test_schedule_monotone_non_increasing():
    sched = TrimSchedule(150)
    values = [fraction_at_epoch(sched, e) for e in range(1, 151)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_schedule_single_epoch():
    assert fraction_at_epoch(TrimSchedule(1), 1) == 1.0


def test_schedule_constant_when_pinned():
    sched = TrimSchedule(10, 1.0, 1.0)
    assert all(fraction_at_epoch(sched, e) == 1.0 for e in range(1, 11))


@pytest.mark.parametrize("epoch", [0, 151, -3])
def test_schedule_epoch_out_of_range(epoch):
    with pytest.raises(ContractError):
        fraction_at_epoch(TrimSchedule(150), epoch)


@pytest.mark.parametrize("p_start,p_end", [(0.5, 0.8), (1.0, 0.0), (1.2, 0.2)])
def test_schedule_invalid_fractions(p_start, p_end):
    with pytest.raises(ParameterError):
        TrimSchedule(10, p_start, p_end)


# --- trim_count ----------------------------------------------------------------

def test_trim_count_full_batch():
    assert trim_count(128, 1.0) == 128


def test_trim_count_paper_fraction():
    assert trim_count(128, 0.2) == 26  # ceil(25.6)


def test_trim_count_never_empty():
    assert trim_count(5, 0.1) == 1  # max(1, ceil(0.5))


def test_trim_count_partial_batch_uses_actual_size():
    assert trim_count(80, 0.2) == 16


# --- select_topk ----------------------------------------------------------------

def test_select_topk_ties_break_by_index():
    plan = select_topk(np.array([0.1, 2.0, 0.5, 2.0]), 2)
    assert plan.selected.tolist() == [1, 3]


def test_select_topk_full_is_stable_descending_sort():
    losses = np.array([1.0, 3.0, 1.0, 2.0, 3.0])
    plan = select_topk(losses, 5)
    assert plan.selected.tolist() == [1, 4, 3, 0, 2]


def test_select_topk_single_max():
    assert select_topk(np.array([5.0, 1.0, 3.0]), 1).selected.tolist() == [0]


@pytest.mark.parametrize("k", [0, 4, -1])
def test_select_topk_k_out_of_range(k):
    with pytest.raises(ContractError):
        select_topk(np.array([1.0, 2.0, 3.0]), k)


def _oracle_topk(losses, k):
    """Brute force: full stable descending sort, truncated at k."""
    return sorted(range(len(losses)), key=lambda i: (-losses[i], i))[:k]


def test_select_topk_oracle_equivalence_1000_cases():
    prng = Prng(202)
    for _ in range(1000):
        batch = 1 + prng.next_u64() % 64
        k = 1 + prng.next_u64() % batch
        # coarse quantization plants plenty of ties
        losses = np.floor(prng.uniforms(int(batch)) * 6.0) / 3.0
        plan = select_topk(losses, int(k))
        assert plan.selected.tolist() == _oracle_topk(losses, int(k))
        unselected = np.setdiff1d(np.arange(int(batch)), plan.selected)
        if unselected.size:
            assert losses[plan.selected].min() >= losses[unselected].max()


def test_select_topk_permutation_consistency():
    prng = Prng(17)
    losses = prng.uniforms(16)
    perm = np.argsort(prng.uniforms(16))
    base = select_topk(losses, 5)
    shuffled = select_topk(losses[perm], 5)
    assert sorted(losses[base.selected]) == sorted(losses[perm][shuffled.selected])


# --- trimmed_mean ----------------------------------------------------------------

def _trim_grads(losses, k):
    tape = ad.Tape()
    node = ad.input_node(tape, Tensor(np.asarray(losses, dtype=np.float64)))
    plan = select_topk(np.asarray(losses, dtype=np.float64), k)
    root = trimmed_mean(tape, node, plan)
    ad.backward(tape, root)
    return tape.value(root)[0], tape.grad(node)


def test_trimmed_mean_k_equals_batch():
    value, grads = _trim_grads([1.0, 2.0, 3.0, 4.0], 4)
    assert value == 2.5
    assert np.array_equal(grads, [0.25, 0.25, 0.25, 0.25])


def test_trimmed_mean_top_two():
    value, grads = _trim_grads([1.0, 2.0, 3.0, 4.0], 2)
    assert value == 3.5
    assert np.array_equal(grads, [0.0, 0.0, 0.5, 0.5])


def test_trimmed_mean_k1_degenerates_to_max():
    value, grads = _trim_grads([1.0, 4.0, 3.0], 1)
    assert value == 4.0
    assert np.array_equal(grads, [0.0, 1.0, 0.0])


def test_trimmed_mean_gradient_contract_100_cases():
    """Grad w.r.t. the loss vector is exactly 1/k on selected, 0 elsewhere."""
    prng = Prng(303)
    for _ in range(100):
        batch = 1 + prng.next_u64() % 48
        k = 1 + prng.next_u64() % batch
        losses = prng.uniforms(int(batch)) * 3.0
        _, grads = _trim_grads(losses, int(k))
        plan = select_topk(losses, int(k))
        expected = np.zeros(int(batch))
        expected[plan.selected] = 1.0 / int(k)
        assert np.array_equal(grads, expected)


def test_trimmed_mean_full_equals_ascending_mean_bit_exact():
    prng = Prng(404)
    for _ in range(20):
        losses = prng.uniforms(37) * 5.0
        value, _ = _trim_grads(losses, 37)
        assert value == np.sum(losses) / 37


def test_full_plan_matches_topk_value_at_p1():
    losses = Prng(7).uniforms(24)
    tape = ad.Tape()
    node = ad.input_node(tape, Tensor(losses))
    via_full = trimmed_mean(tape, node, full_plan(24))
    via_topk = trimmed_mean(tape, node, select_topk(losses, 24))
    assert tape.value(via_full)[0] == tape.value(via_topk)[0]


# --- subset recompute ----------------------------------------------------------------

def _masked_gradients(model, x, labels, plan):
    tape = ad.Tape()
    psl = forward_per_sample_loss(tape, model, x, labels)
    root = trimmed_mean(tape, psl.node_id, plan)
    ad.backward(tape, root)
    return {name: tape.grad(psl.param_nodes[name]) for name, _ in model.parameters()}


def _max_rel_diff(a, b):
    a, b = a.reshape(-1), b.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def test_subset_recompute_equals_plain_mean_at_full_k():
    prng = Prng(501)
    model = init_params(mlp3(6, 3), prng)
    x = randn(prng, [8, 6])
    labels = np.arange(8) % 3
    plan = full_plan(8)
    fast = subset_recompute_gradients(model, x, labels, plan)
    slow = _masked_gradients(model, x, labels, plan)
    for name in fast:
        assert np.array_equal(fast[name], slow[name])


def test_subset_recompute_matches_masked_backward_mlp():
    prng = Prng(502)
    model = init_params(mlp3(6, 3), prng)
    x = randn(prng, [8, 6])
    labels = np.arange(8) % 3
    tape = ad.Tape()
    psl = forward_per_sample_loss(tape, model, x, labels)
    plan = select_topk(psl.values.array, 3)
    slow = _masked_gradients(model, x, labels, plan)
    fast = subset_recompute_gradients(model, x, labels, plan)
    for name in fast:
        assert _max_rel_diff(fast[name], slow[name]) < 1e-10


def test_subset_recompute_k1_is_single_sample_backward():
    prng = Prng(503)
    model = init_params(mlp3(5, 3), prng)
    x = randn(prng, [6, 5])
    labels = np.arange(6) % 3
    tape = ad.Tape()
    psl = forward_per_sample_loss(tape, model, x, labels)
    plan = select_topk(psl.values.array, 1)
    hardest = int(plan.selected[0])

    single_x = Tensor(x.array[hardest:hardest + 1])
    single = _masked_gradients(model, single_x, labels[hardest:hardest + 1], full_plan(1))
    fast = subset_recompute_gradients(model, x, labels, plan)
    for name in fast:
        assert _max_rel_diff(fast[name], single[name]) < 1e-10


def test_subset_recompute_matches_masked_backward_cnn():
    prng = Prng(504)
    model = init_params(tinycnn(4, height=8, width=8), prng)
    x = randn(prng, [6, 3, 8, 8])
    labels = np.arange(6) % 4
    tape = ad.Tape()
    psl = forward_per_sample_loss(tape, model, x, labels)
    plan = select_topk(psl.values.array, 2)
    slow = _masked_gradients(model, x, labels, plan)
    fast = subset_recompute_gradients(model, x, labels, plan)
    for name in fast:
        assert _max_rel_diff(fast[name], slow[name]) < 1e-10


def test_subset_recompute_guards_batch_coupled_layers():
    model = Model(arch="custom", layers=[Layer("batchnorm")], classes=2)
    with pytest.raises(ContractError):
        subset_recompute_gradients(model, randn(Prng(1), [4, 2]), [0, 1, 0, 1],
                                   full_plan(4))
