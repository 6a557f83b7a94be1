"""Built-in property suites, runnable without a test framework.

Each check re-verifies one of the library's load-bearing invariants with an
independent oracle (brute-force sort, hand summation, a second run).  The CLI
`selftest` subcommand prints one line per check.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .data import batches, synth_blobs
from .harness import (
    BlobsConfig,
    TrainConfig,
    TrimConfig,
    emit_csv,
    run_trial,
)
from .model import forward_per_sample_loss, init_params, mlp3
from .optim import LrSchedule
from .rng import Prng, derive_seed, randn
from .tensor import Tensor, create, matmul
from .trim import (
    TrimSchedule,
    fraction_at_epoch,
    full_plan,
    select_topk,
    subset_recompute_gradients,
    trim_count,
    trimmed_mean,
)


def _check_randn_determinism():
    a = randn(Prng(7), [4], 0.0, 1.0)
    b = randn(Prng(7), [4], 0.0, 1.0)
    assert np.array_equal(a.array, b.array), "same seed must give identical bits"
    big = randn(Prng(11), [10000], 0.0, 1.0).array
    assert abs(big.mean()) < 0.05 and abs(big.std() - 1.0) < 0.05, "moments off"


def _check_matmul_identity():
    a = randn(Prng(3), [5, 5]).array
    b = randn(Prng(4), [5, 5]).array
    ai = matmul(Tensor(a), Tensor(np.eye(5)))
    assert np.array_equal(ai.array, a), "A @ I must equal A bit-exactly"
    assert np.array_equal(matmul(ai, Tensor(b)).array, a @ b), "(A @ I) @ B != A @ B"


def _check_topk_oracle():
    prng = Prng(99)
    for _ in range(1000):
        batch = 1 + prng.next_u64() % 64
        k = 1 + prng.next_u64() % batch
        # quantized losses force ties
        losses = np.floor(prng.uniforms(int(batch)) * 8.0) / 4.0
        plan = select_topk(losses, int(k))
        oracle = sorted(range(int(batch)), key=lambda i: (-losses[i], i))[:int(k)]
        assert sorted(plan.selected.tolist()) == sorted(oracle), "selection multiset differs"
        unselected = np.setdiff1d(np.arange(int(batch)), plan.selected)
        if unselected.size:
            assert losses[plan.selected].min() >= losses[unselected].max(), (
                "kept a smaller loss than one dropped")


def _check_schedule():
    sched = TrimSchedule(150, 1.0, 0.2)
    values = [fraction_at_epoch(sched, e) for e in range(1, 151)]
    assert values[0] == 1.0 and values[-1] == 0.2, "endpoints must be exact"
    assert all(a >= b for a, b in zip(values, values[1:])), "schedule must not increase"
    assert trim_count(128, 0.2) == 26 and trim_count(5, 0.1) == 1


def _check_trimmed_mean_grads():
    prng = Prng(5)
    for _ in range(100):
        batch = 2 + prng.next_u64() % 32
        k = 1 + prng.next_u64() % batch
        losses = prng.uniforms(int(batch)) + 0.01
        tape = ad.Tape()
        node = ad.input_node(tape, Tensor(losses))
        plan = select_topk(losses, int(k))
        root = trimmed_mean(tape, node, plan)
        ad.backward(tape, root)
        grad = tape.grad(node)
        expected = np.zeros(int(batch))
        expected[plan.selected] = 1.0 / int(k)
        assert np.array_equal(grad, expected), "trimmed-mean grad must be exactly 1/k"


def _check_subset_recompute():
    prng = Prng(21)
    model = init_params(mlp3(6, 3), prng)
    x = randn(prng, [8, 6])
    labels = np.arange(8) % 3
    tape = ad.Tape()
    psl = forward_per_sample_loss(tape, model, x, labels)
    plan = select_topk(psl.values.array, 3)
    root = trimmed_mean(tape, psl.node_id, plan)
    ad.backward(tape, root)
    fast = subset_recompute_gradients(model, x, labels, plan)
    for name, _ in model.parameters():
        a = tape.grad(psl.param_nodes[name]).reshape(-1)
        b = fast[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
        assert np.max(np.abs(a - b) / denom) < 1e-10, f"{name} gradients diverge"


def _check_batches_partition():
    ds = synth_blobs(Prng(1), 23, 4, 3, 1.0)
    slices = batches(ds, 5, run_seed=42, epoch=1)
    assert [len(s) for s in slices] == [5, 5, 5, 5, 3]
    merged = np.sort(np.concatenate(slices))
    assert np.array_equal(merged, np.arange(23)), "batches must partition the dataset"
    again = batches(ds, 5, run_seed=42, epoch=1)
    assert all(np.array_equal(a, b) for a, b in zip(slices, again)), "same epoch must repeat"


def _tiny_config(enabled: bool, p_start: float = 1.0, p_end: float = 0.2) -> TrainConfig:
    return TrainConfig(
        dataset=BlobsConfig("blobs", n_train=120, n_test=40, dim=8, classes=4,
                            cluster_std=1.0, data_seed=5),
        model="mlp3", epochs=2, seeds=(1,), batch_size=32,
        lr_milestones=(), trim=TrimConfig(enabled, p_start, p_end))


def _check_p1_equivalence():
    off = run_trial(_tiny_config(False), seed=3)
    on = run_trial(_tiny_config(True, 1.0, 1.0), seed=3)
    for (_, a), (_, b) in zip(off.model.parameters(), on.model.parameters()):
        assert np.array_equal(a.array, b.array), "p=1 trimming must match disabled bits"
    for ra, rb in zip(off.rows, on.rows):
        assert ra.train_loss_trimmed == rb.train_loss_trimmed
        assert ra.train_loss_full == rb.train_loss_full


def _check_csv_determinism():
    rows = run_trial(_tiny_config(True), seed=9).rows
    assert emit_csv(rows) == emit_csv(list(rows)), "CSV bytes must be reproducible"
    again = run_trial(_tiny_config(True), seed=9).rows
    assert emit_csv(rows) == emit_csv(again), "rerun must give identical CSV bytes"


CHECKS = [
    ("randn determinism and moments", _check_randn_determinism),
    ("matmul identity bit-exactness", _check_matmul_identity),
    ("top-k selection vs stable-sort oracle (1000 cases)", _check_topk_oracle),
    ("trim schedule endpoints and monotonicity", _check_schedule),
    ("trimmed-mean gradient contract (100 cases)", _check_trimmed_mean_grads),
    ("subset recompute equals masked backward", _check_subset_recompute),
    ("epoch batches partition the dataset", _check_batches_partition),
    ("trimming at p=1.0 is bit-identical to disabled", _check_p1_equivalence),
    ("metrics CSV byte determinism", _check_csv_determinism),
]


def run(emit=print) -> bool:
    ok = True
    for name, check in CHECKS:
        try:
            check()
        except AssertionError as exc:
            ok = False
            emit(f"FAIL {name}: {exc}")
        else:
            emit(f"ok   {name}")
    return ok
