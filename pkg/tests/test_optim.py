"""Optimizer tests: closed-form single steps, schedules, convergence."""

import numpy as np
import pytest

from batchtrim.errors import ContractError, ParameterError
from batchtrim.optim import (
    AdamState,
    LrSchedule,
    SgdState,
    adam_step,
    lr_at_epoch,
    sgd_step,
)
from batchtrim.tensor import Tensor, create


# --- learning-rate schedule ---------------------------------------------------

def test_lr_before_first_milestone():
    sched = LrSchedule(0.001, (50, 100), 0.5)
    assert lr_at_epoch(sched, 1) == 0.001
    assert lr_at_epoch(sched, 49) == 0.001


def test_lr_decays_at_milestones():
    sched = LrSchedule(0.001, (50, 100), 0.5)
    assert lr_at_epoch(sched, 50) == 0.0005
    assert lr_at_epoch(sched, 120) == 0.00025


def test_lr_no_milestones():
    sched = LrSchedule(0.01)
    assert all(lr_at_epoch(sched, e) == 0.01 for e in (1, 10, 1000))


def test_lr_non_increasing():
    sched = LrSchedule(0.001, (3, 7, 9), 0.5)
    values = [lr_at_epoch(sched, e) for e in range(1, 15)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_lr_rejects_bad_milestones():
    with pytest.raises(ParameterError):
        LrSchedule(0.001, (10, 10), 0.5)
    with pytest.raises(ParameterError):
        LrSchedule(0.001, (0, 5), 0.5)


def test_lr_rejects_epoch_zero():
    with pytest.raises(ContractError):
        lr_at_epoch(LrSchedule(0.001), 0)


# --- adam ---------------------------------------------------------------------

def _scalar_param(value):
    return [Tensor(np.array([value]))]


def test_adam_first_step_closed_form():
    """t=1 bias corrections cancel: delta = -lr * g / (|g| + eps)."""
    params = _scalar_param(0.5)
    state = AdamState.for_params(params)
    adam_step(state, params, [np.array([1.0])], lr=0.001)
    delta = params[0].array[0] - 0.5
    assert delta == pytest.approx(-0.000999999990, abs=1e-12)


def test_adam_zero_gradient_is_fixed_point():
    params = _scalar_param(1.5)
    state = AdamState.for_params(params)
    adam_step(state, params, [np.array([0.0])], lr=0.001)
    assert params[0].array[0] == 1.5
    assert np.all(state.m[0] == 0.0) and np.all(state.v[0] == 0.0)


def test_adam_decreases_under_constant_positive_gradient():
    params = _scalar_param(1.0)
    state = AdamState.for_params(params)
    previous = 1.0
    for _ in range(2):
        adam_step(state, params, [np.array([1.0])], lr=0.001)
        assert params[0].array[0] < previous
        previous = params[0].array[0]


def test_adam_weight_decay_pulls_toward_zero():
    params = _scalar_param(10.0)
    state = AdamState.for_params(params)
    adam_step(state, params, [np.array([0.0])], lr=0.001, weight_decay=0.0001)
    assert params[0].array[0] < 10.0


def test_adam_v_stays_nonnegative():
    prng = np.random.default_rng(0)
    params = [Tensor(prng.standard_normal(5))]
    state = AdamState.for_params(params)
    for _ in range(50):
        adam_step(state, params, [prng.standard_normal(5)], lr=0.01)
        assert np.all(state.v[0] >= 0.0)


def test_adam_shape_mismatch():
    params = _scalar_param(1.0)
    state = AdamState.for_params(params)
    with pytest.raises(ContractError):
        adam_step(state, params, [np.zeros(2)], lr=0.001)


def test_adam_deterministic():
    def run():
        params = [Tensor(np.array([1.0, -2.0])), Tensor(np.array([[0.5, 0.1]]))]
        state = AdamState.for_params(params)
        grads = [np.array([0.3, -0.7]), np.array([[1.0, -1.0]])]
        for _ in range(7):
            adam_step(state, params, grads, lr=0.001, weight_decay=0.0001)
        return [p.array.copy() for p in params]

    a, b = run(), run()
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


# --- sgd ------------------------------------------------------------------------

def test_sgd_vanilla_step():
    params = _scalar_param(1.0)
    state = SgdState.for_params(params)
    sgd_step(state, params, [np.array([2.0])], lr=0.1, momentum=0.0)
    assert params[0].array[0] == pytest.approx(0.8, abs=1e-15)


def test_sgd_zero_gradient_fixed_point():
    params = _scalar_param(3.0)
    state = SgdState.for_params(params)
    sgd_step(state, params, [np.array([0.0])], lr=0.1)
    assert params[0].array[0] == 3.0


def test_sgd_momentum_accumulates():
    """Second update under constant g has magnitude lr * g * (1 + mu)."""
    params = _scalar_param(0.0)
    state = SgdState.for_params(params)
    g = [np.array([1.0])]
    sgd_step(state, params, g, lr=0.1, momentum=0.9)
    first = -params[0].array[0]
    sgd_step(state, params, g, lr=0.1, momentum=0.9)
    second = -params[0].array[0] - first
    assert first == pytest.approx(0.1, abs=1e-15)
    assert second == pytest.approx(0.1 * 1.9, abs=1e-15)


def test_sgd_shape_mismatch():
    params = _scalar_param(1.0)
    state = SgdState.for_params(params)
    with pytest.raises(ContractError):
        sgd_step(state, params, [np.zeros(3)], lr=0.1)


# --- convergence smoke -----------------------------------------------------------

@pytest.mark.parametrize("kind", ["adam", "sgd"])
def test_quadratic_converges_within_5000_steps(kind):
    """L(w) = w^2 / 2, grad = w; |w| must drop below 1e-3 from w = 1."""
    params = _scalar_param(1.0)
    if kind == "adam":
        state = AdamState.for_params(params)
    else:
        state = SgdState.for_params(params)
    for step in range(5000):
        grad = [params[0].array.copy()]
        if kind == "adam":
            adam_step(state, params, grad, lr=0.001, weight_decay=0.0001)
        else:
            sgd_step(state, params, grad, lr=0.001, momentum=0.9, weight_decay=0.0001)
        if abs(params[0].array[0]) < 1e-3:
            break
    assert abs(params[0].array[0]) < 1e-3
