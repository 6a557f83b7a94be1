"""Experiment orchestration: config parsing, seeded trials, the trim-on vs
trim-off comparison, and the metrics CSV.

A trial is fully determined by (config, seed): weight init draws from
derive_seed(seed, 0), the epoch-e shuffle from derive_seed(seed, e), and the
synthetic dataset only from its own data_seed, so trim-on and trim-off
variants of the same seed train on identical data in identical order.

Metrics CSV contract: header exactly
    seed,epoch,p_fraction,lr,train_loss_trimmed,train_loss_full,test_error
floats with 9 significant digits, rows sorted by (seed, epoch), LF endings.
A comparison experiment writes one CSV per variant (<out>.trim_off.csv and
<out>.trim_on.csv) since the row schema carries no variant column.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .data import Dataset, batches, load_cifar10_bin, load_idx, split_dataset, standardize, synth_blobs
from .errors import ConfigError, ContractError
from .model import Model, forward_per_sample_loss, init_params, mlp3, tinycnn, top1_error
from .optim import AdamState, LrSchedule, SgdState, adam_step, lr_at_epoch, sgd_step
from .rng import Prng, derive_seed
from .tensor import Tensor
from .trim import TrimSchedule, fraction_at_epoch, full_plan, select_topk, trim_count, trimmed_mean

CSV_HEADER = "seed,epoch,p_fraction,lr,train_loss_trimmed,train_loss_full,test_error"

# Defaults (also documented in the README): batch_size 128; adam lr 0.001,
# weight_decay 0.0001, beta1 0.9, beta2 0.999, eps 1e-8; milestones (50, 100)
# with gamma 0.5; trimming enabled, p from 1.0 down to 0.2.
_DEFAULT_MILESTONES = (50, 100)


@dataclass(frozen=True)
class BlobsConfig:
    kind: str
    n_train: int
    n_test: int
    dim: int
    classes: int
    cluster_std: float = 1.0
    label_flip_prob: float = 0.0
    data_seed: int = 1234


@dataclass(frozen=True)
class IdxConfig:
    kind: str
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str


@dataclass(frozen=True)
class Cifar10Config:
    kind: str
    train: tuple[str, ...]
    test: tuple[str, ...]


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 0.001
    weight_decay: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9


@dataclass(frozen=True)
class TrimConfig:
    enabled: bool = True
    p_start: float = 1.0
    p_end: float = 0.2


@dataclass(frozen=True)
class TrainConfig:
    dataset: BlobsConfig | IdxConfig | Cifar10Config
    model: str
    epochs: int
    seeds: tuple[int, ...]
    batch_size: int = 128
    optimizer: OptimizerConfig = OptimizerConfig()
    lr_milestones: tuple[int, ...] = _DEFAULT_MILESTONES
    lr_gamma: float = 0.5
    trim: TrimConfig = TrimConfig()
    out: str = "metrics"


@dataclass
class MetricsRow:
    """One (seed, epoch) observation of the training loop."""

    seed: int
    epoch: int
    p_fraction: float
    lr: float
    train_loss_trimmed: float
    train_loss_full: float
    test_error: float


@dataclass
class ComparisonCell:
    """Final test errors (percent) averaged over seeds, off vs on."""

    off_mean_pct: float
    on_mean_pct: float
    per_seed_off_pct: tuple[float, ...]
    per_seed_on_pct: tuple[float, ...]
    winner: str | None  # "off", "on", or None on a tie at 2 decimals


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return section[key]


def _as_int(value, name: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def _as_float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


def _parse_dataset(section) -> BlobsConfig | IdxConfig | Cifar10Config:
    if not isinstance(section, dict):
        raise ConfigError("dataset must be an object")
    kind = _require(section, "kind", "dataset")
    if kind == "blobs":
        _reject_unknown(section, {"kind", "n_train", "n_test", "dim", "classes",
                                  "cluster_std", "label_flip_prob", "data_seed"}, "dataset")
        cfg = BlobsConfig(
            kind=kind,
            n_train=_as_int(_require(section, "n_train", "dataset"), "dataset.n_train", 1),
            n_test=_as_int(_require(section, "n_test", "dataset"), "dataset.n_test", 1),
            dim=_as_int(_require(section, "dim", "dataset"), "dataset.dim", 1),
            classes=_as_int(_require(section, "classes", "dataset"), "dataset.classes", 2),
            cluster_std=_as_float(section.get("cluster_std", 1.0), "dataset.cluster_std"),
            label_flip_prob=_as_float(section.get("label_flip_prob", 0.0),
                                      "dataset.label_flip_prob"),
            data_seed=_as_int(section.get("data_seed", 1234), "dataset.data_seed", 0),
        )
        if cfg.cluster_std <= 0:
            raise ConfigError(f"dataset.cluster_std must be > 0, got {cfg.cluster_std}")
        if not 0.0 <= cfg.label_flip_prob < 1.0:
            raise ConfigError(
                f"dataset.label_flip_prob must be in [0, 1), got {cfg.label_flip_prob}")
        return cfg
    if kind == "mnist_idx":
        _reject_unknown(section, {"kind", "train_images", "train_labels",
                                  "test_images", "test_labels"}, "dataset")
        return IdxConfig(kind=kind,
                         train_images=str(_require(section, "train_images", "dataset")),
                         train_labels=str(_require(section, "train_labels", "dataset")),
                         test_images=str(_require(section, "test_images", "dataset")),
                         test_labels=str(_require(section, "test_labels", "dataset")))
    if kind == "cifar10_bin":
        _reject_unknown(section, {"kind", "train", "test"}, "dataset")
        train = _require(section, "train", "dataset")
        test = _require(section, "test", "dataset")
        if not isinstance(train, list) or not train or not all(isinstance(p, str) for p in train):
            raise ConfigError("dataset.train must be a nonempty list of paths")
        if not isinstance(test, list) or not test or not all(isinstance(p, str) for p in test):
            raise ConfigError("dataset.test must be a nonempty list of paths")
        return Cifar10Config(kind=kind, train=tuple(train), test=tuple(test))
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _parse_optimizer(section) -> OptimizerConfig:
    if not isinstance(section, dict):
        raise ConfigError("optimizer must be an object")
    _reject_unknown(section, {"kind", "lr", "weight_decay", "beta1", "beta2",
                              "eps", "momentum"}, "optimizer")
    kind = section.get("kind", "adam")
    if kind not in ("adam", "sgd"):
        raise ConfigError(f"optimizer.kind must be 'adam' or 'sgd', got {kind!r}")
    cfg = OptimizerConfig(
        kind=kind,
        lr=_as_float(section.get("lr", 0.001), "optimizer.lr"),
        weight_decay=_as_float(section.get("weight_decay", 0.0001), "optimizer.weight_decay"),
        beta1=_as_float(section.get("beta1", 0.9), "optimizer.beta1"),
        beta2=_as_float(section.get("beta2", 0.999), "optimizer.beta2"),
        eps=_as_float(section.get("eps", 1e-8), "optimizer.eps"),
        momentum=_as_float(section.get("momentum", 0.9), "optimizer.momentum"),
    )
    if cfg.lr <= 0:
        raise ConfigError(f"optimizer.lr must be > 0, got {cfg.lr}")
    if cfg.weight_decay < 0:
        raise ConfigError(f"optimizer.weight_decay must be >= 0, got {cfg.weight_decay}")
    return cfg


def _parse_trim(section) -> TrimConfig:
    if not isinstance(section, dict):
        raise ConfigError("trim must be an object")
    _reject_unknown(section, {"enabled", "p_start", "p_end"}, "trim")
    enabled = section.get("enabled", True)
    if not isinstance(enabled, bool):
        raise ConfigError(f"trim.enabled must be a boolean, got {enabled!r}")
    cfg = TrimConfig(enabled=enabled,
                     p_start=_as_float(section.get("p_start", 1.0), "trim.p_start"),
                     p_end=_as_float(section.get("p_end", 0.2), "trim.p_end"))
    if not 0.0 < cfg.p_end <= cfg.p_start <= 1.0:
        raise ConfigError(
            f"trim fractions need 0 < p_end <= p_start <= 1, got "
            f"p_start={cfg.p_start}, p_end={cfg.p_end}")
    return cfg


def parse_config(text: str) -> TrainConfig:
    """Parse and validate a JSON experiment description.

    Unknown keys are rejected at every level (catches typos); omitted
    sections fall back to the documented defaults.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, {"dataset", "model", "epochs", "batch_size", "optimizer",
                          "lr_milestones", "lr_gamma", "trim", "seeds", "out"}, "config")

    model = _require(raw, "model", "config")
    if model not in ("mlp3", "tinycnn"):
        raise ConfigError(f"model must be 'mlp3' or 'tinycnn', got {model!r}")

    seeds_raw = _require(raw, "seeds", "config")
    if not isinstance(seeds_raw, list) or not seeds_raw:
        raise ConfigError("seeds must be a nonempty list of integers")
    seeds = tuple(_as_int(s, "seeds entry", 0) for s in seeds_raw)

    milestones_raw = raw.get("lr_milestones", list(_DEFAULT_MILESTONES))
    if not isinstance(milestones_raw, list):
        raise ConfigError("lr_milestones must be a list of epochs")
    milestones = tuple(_as_int(m, "lr_milestones entry", 1) for m in milestones_raw)

    out = raw.get("out", "metrics")
    if not isinstance(out, str) or not out:
        raise ConfigError(f"out must be a nonempty string, got {out!r}")

    cfg = TrainConfig(
        dataset=_parse_dataset(_require(raw, "dataset", "config")),
        model=model,
        epochs=_as_int(_require(raw, "epochs", "config"), "epochs", 1),
        seeds=seeds,
        batch_size=_as_int(raw.get("batch_size", 128), "batch_size", 1),
        optimizer=_parse_optimizer(raw.get("optimizer", {})),
        lr_milestones=milestones,
        lr_gamma=_as_float(raw.get("lr_gamma", 0.5), "lr_gamma"),
        trim=_parse_trim(raw.get("trim", {})),
        out=out,
    )
    # surface invalid milestone ordering now rather than at epoch 1
    LrSchedule(cfg.optimizer.lr, cfg.lr_milestones, cfg.lr_gamma)
    TrimSchedule(cfg.epochs, cfg.trim.p_start, cfg.trim.p_end)
    return cfg


def load_config(path: str) -> TrainConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# data loading
# ---------------------------------------------------------------------------

def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path!r}: {exc}") from exc


def load_datasets(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """Materialize (train, test), standardized with train statistics."""
    ds = cfg.dataset
    if isinstance(ds, BlobsConfig):
        full = synth_blobs(Prng(ds.data_seed), ds.n_train + ds.n_test, ds.dim,
                           ds.classes, ds.cluster_std, ds.label_flip_prob)
        train, test = split_dataset(full, ds.n_train)
    elif isinstance(ds, IdxConfig):
        train = load_idx(_read_bytes(ds.train_images), _read_bytes(ds.train_labels), "train")
        test = load_idx(_read_bytes(ds.test_images), _read_bytes(ds.test_labels), "test")
    else:
        train_parts = [load_cifar10_bin(_read_bytes(p), "train") for p in ds.train]
        test_parts = [load_cifar10_bin(_read_bytes(p), "test") for p in ds.test]
        train = _concat(train_parts, "train")
        test = _concat(test_parts, "test")
    train, test, _ = standardize(train, test)
    return train, test


def _concat(parts: list[Dataset], split: str) -> Dataset:
    if len(parts) == 1:
        return parts[0]
    inputs = np.concatenate([p.inputs.array for p in parts], axis=0)
    labels = np.concatenate([p.labels for p in parts], axis=0)
    return Dataset(Tensor(inputs), labels, parts[0].class_count, split)


def _build_model(cfg: TrainConfig, train: Dataset) -> Model:
    shape = train.inputs.shape
    if cfg.model == "mlp3":
        if len(shape) != 2:
            raise ConfigError(f"mlp3 needs [N, d] inputs, got {shape}")
        return mlp3(shape[1], train.class_count)
    if len(shape) != 4:
        raise ConfigError(f"tinycnn needs [N, C, H, W] inputs, got {shape}")
    return tinycnn(train.class_count, in_channels=shape[1], height=shape[2], width=shape[3])


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    rows: list[MetricsRow]
    model: Model


def run_trial(cfg: TrainConfig, seed: int,
              data: tuple[Dataset, Dataset] | None = None) -> TrialResult:
    """Train one model; one MetricsRow per epoch with end-of-epoch test error.

    When trimming is disabled the schedule and top-k selection are bypassed
    entirely; the objective is the keep-everything plan, whose value and
    gradients are bit-identical to trimming with p = 1.0.
    """
    train, test = data if data is not None else load_datasets(cfg)
    model = _build_model(cfg, train)
    init_params(model, Prng(derive_seed(seed, 0)))
    names = [name for name, _ in model.parameters()]
    params = [p for _, p in model.parameters()]

    opt = cfg.optimizer
    if opt.kind == "adam":
        adam = AdamState.for_params(params)
    else:
        sgd = SgdState.for_params(params)
    lr_sched = LrSchedule(opt.lr, cfg.lr_milestones, cfg.lr_gamma)
    trim_sched = TrimSchedule(cfg.epochs, cfg.trim.p_start, cfg.trim.p_end)

    rows: list[MetricsRow] = []
    for epoch in range(1, cfg.epochs + 1):
        p = fraction_at_epoch(trim_sched, epoch) if cfg.trim.enabled else 1.0
        lr = lr_at_epoch(lr_sched, epoch)
        trimmed_sum = 0.0
        full_sum = 0.0
        for idx in batches(train, cfg.batch_size, seed, epoch):
            x = Tensor(train.inputs.array[idx])
            y = train.labels[idx]
            tape = ad.Tape()
            psl = forward_per_sample_loss(tape, model, x, y)
            losses = psl.values.array
            actual = losses.shape[0]
            if cfg.trim.enabled:
                plan = select_topk(losses, trim_count(actual, p), p)
            else:
                plan = full_plan(actual)
            root = trimmed_mean(tape, psl.node_id, plan)
            ad.backward(tape, root)
            grads = [tape.grad(psl.param_nodes[name]) for name in names]
            if opt.kind == "adam":
                adam_step(adam, params, grads, lr, opt.beta1, opt.beta2, opt.eps,
                          opt.weight_decay)
            else:
                sgd_step(sgd, params, grads, lr, opt.momentum, opt.weight_decay)
            trimmed_sum += float(tape.value(root)[0])
            full_sum += float(np.sum(losses) / actual)
        n_batches = math.ceil(len(train) / cfg.batch_size)
        rows.append(MetricsRow(
            seed=seed, epoch=epoch, p_fraction=p, lr=lr,
            train_loss_trimmed=trimmed_sum / n_batches,
            train_loss_full=full_sum / n_batches,
            test_error=top1_error(model, test)))
    return TrialResult(rows=rows, model=model)


# ---------------------------------------------------------------------------
# experiment: trimming off vs on
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    cell: ComparisonCell
    rows_off: list[MetricsRow]
    rows_on: list[MetricsRow]
    csv_off: str
    csv_on: str


def run_experiment(cfg: TrainConfig, out: str | None = None) -> ExperimentResult:
    """Run every seed twice (trimming off, then on) and write both CSVs.

    Per-seed final test errors are averaged into one comparison cell; the
    aggregation sorts rows first, so trial execution order can never change
    the output bytes.
    """
    data = load_datasets(cfg)
    off_cfg = replace(cfg, trim=TrimConfig(False, 1.0, 1.0))
    on_cfg = replace(cfg, trim=TrimConfig(True, cfg.trim.p_start, cfg.trim.p_end))
    rows_off: list[MetricsRow] = []
    rows_on: list[MetricsRow] = []
    finals_off: list[float] = []
    finals_on: list[float] = []
    for seed in cfg.seeds:
        off = run_trial(off_cfg, seed, data)
        on = run_trial(on_cfg, seed, data)
        rows_off.extend(off.rows)
        rows_on.extend(on.rows)
        finals_off.append(off.rows[-1].test_error)
        finals_on.append(on.rows[-1].test_error)

    cell = make_cell(finals_off, finals_on)
    stem = out if out is not None else cfg.out
    parent = os.path.dirname(stem)
    if parent:
        os.makedirs(parent, exist_ok=True)
    csv_off = stem + ".trim_off.csv"
    csv_on = stem + ".trim_on.csv"
    with open(csv_off, "wb") as fh:
        fh.write(emit_csv(rows_off))
    with open(csv_on, "wb") as fh:
        fh.write(emit_csv(rows_on))
    return ExperimentResult(cell=cell, rows_off=rows_off, rows_on=rows_on,
                            csv_off=csv_off, csv_on=csv_on)


def make_cell(finals_off: list[float], finals_on: list[float]) -> ComparisonCell:
    off_pct = tuple(100.0 * e for e in finals_off)
    on_pct = tuple(100.0 * e for e in finals_on)
    off_mean = sum(off_pct) / len(off_pct)
    on_mean = sum(on_pct) / len(on_pct)
    # the winner flag compares what the table shows: the 2-decimal values
    off_r, on_r = round(off_mean, 2), round(on_mean, 2)
    winner = None if off_r == on_r else ("off" if off_r < on_r else "on")
    return ComparisonCell(off_mean_pct=off_mean, on_mean_pct=on_mean,
                          per_seed_off_pct=off_pct, per_seed_on_pct=on_pct,
                          winner=winner)


def format_comparison(cell: ComparisonCell) -> str:
    """'<off> / <on>' in percent, two decimals, the lower value in bold."""
    off = f"{cell.off_mean_pct:.2f}"
    on = f"{cell.on_mean_pct:.2f}"
    if cell.winner == "off":
        off = f"**{off}**"
    elif cell.winner == "on":
        on = f"**{on}**"
    return f"{off} / {on}"


# ---------------------------------------------------------------------------
# metrics CSV
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(float(value), ".9g")


def emit_csv(rows: list[MetricsRow]) -> bytes:
    """Render metrics rows deterministically (see module docstring)."""
    if not rows:
        raise ContractError("emit_csv needs at least one row")
    lines = [CSV_HEADER]
    for r in sorted(rows, key=lambda r: (r.seed, r.epoch)):
        lines.append(",".join([
            str(r.seed), str(r.epoch), _fmt(r.p_fraction), _fmt(r.lr),
            _fmt(r.train_loss_trimmed), _fmt(r.train_loss_full), _fmt(r.test_error)]))
    return ("\n".join(lines) + "\n").encode("utf-8")
