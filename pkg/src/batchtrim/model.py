"""Layer compositions, initialization, and the per-sample loss head.

Two desk-scale architectures are provided:

  * mlp3:    dense(d -> 256) . relu . dense(256 -> 128) . relu . dense(128 -> classes)
  * tinycnn: conv(C -> 16) . relu . maxpool2 . conv(16 -> 32) . relu . maxpool2
             . flatten . dense(-> classes)

Neither uses batch normalization: every layer is per-sample, which is what
makes backward over a gathered subset of the batch exactly equivalent to the
masked trimmed-mean backward (see trim.subset_recompute_gradients).

The loss head emits the per-sample loss vector rather than a mean, so the
trimming step is a pure post-processing node on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ShapeError
from .rng import Prng, randn
from .tensor import Tensor, create

LAYER_KINDS = frozenset({"dense", "relu", "conv2d", "maxpool2", "flatten"})


@dataclass
class Layer:
    kind: str
    weight: Tensor | None = None
    bias: Tensor | None = None


@dataclass
class Model:
    arch: str
    layers: list[Layer]
    classes: int

    def parameters(self) -> list[tuple[str, Tensor]]:
        """(name, tensor) pairs in layer order; names like 'layer2.weight'."""
        out = []
        for i, layer in enumerate(self.layers):
            if layer.weight is not None:
                out.append((f"layer{i}.weight", layer.weight))
            if layer.bias is not None:
                out.append((f"layer{i}.bias", layer.bias))
        return out


def mlp3(input_dim: int, classes: int) -> Model:
    """Three-layer relu MLP on flat feature vectors."""
    layers = [
        Layer("dense", create([input_dim, 256], 0.0), create([256], 0.0)),
        Layer("relu"),
        Layer("dense", create([256, 128], 0.0), create([128], 0.0)),
        Layer("relu"),
        Layer("dense", create([128, classes], 0.0), create([classes], 0.0)),
    ]
    return Model(arch="mlp3", layers=layers, classes=classes)


def tinycnn(classes: int, in_channels: int = 3, height: int = 32, width: int = 32) -> Model:
    """Small two-block convnet for [B, C, H, W] images; H, W divisible by 4."""
    if height % 4 != 0 or width % 4 != 0:
        raise ShapeError(f"tinycnn needs H, W divisible by 4, got {height}x{width}")
    flat = 32 * (height // 4) * (width // 4)
    layers = [
        Layer("conv2d", create([16, in_channels, 3, 3], 0.0), create([16], 0.0)),
        Layer("relu"),
        Layer("maxpool2"),
        Layer("conv2d", create([32, 16, 3, 3], 0.0), create([32], 0.0)),
        Layer("relu"),
        Layer("maxpool2"),
        Layer("flatten"),
        Layer("dense", create([flat, classes], 0.0), create([classes], 0.0)),
    ]
    return Model(arch="tinycnn", layers=layers, classes=classes)


def init_params(model: Model, prng: Prng) -> Model:
    """He initialization: weights ~ Normal(0, sqrt(2/fan_in)), biases 0.

    Draws happen in layer order, row-major within each weight tensor, so one
    seed pins every parameter bit.  Biases consume no draws.
    """
    for layer in model.layers:
        if layer.weight is None:
            continue
        if layer.kind == "dense":
            fan_in = layer.weight.shape[0]
        else:  # conv2d
            fan_in = layer.weight.shape[1] * 9
        std = np.sqrt(2.0 / fan_in)
        layer.weight = randn(prng, layer.weight.shape, 0.0, std)
        layer.bias = create(layer.bias.shape, 0.0)
    return model


@dataclass
class PerSampleLoss:
    """Nonnegative cross-entropy per batch row, still attached to the tape."""

    values: Tensor
    node_id: int
    param_nodes: dict[str, int] = field(default_factory=dict)


def forward_per_sample_loss(tape: ad.Tape, model: Model, x: Tensor, labels) -> PerSampleLoss:
    """Run the layer stack on the tape and emit the per-sample loss vector."""
    param_nodes: dict[str, int] = {}
    cur = ad.input_node(tape, x)
    for i, layer in enumerate(model.layers):
        if layer.kind == "dense":
            w = ad.input_node(tape, layer.weight)
            b = ad.input_node(tape, layer.bias)
            param_nodes[f"layer{i}.weight"] = w
            param_nodes[f"layer{i}.bias"] = b
            cur = ad.matmul(tape, cur, w)
            cur = ad.add_bias(tape, cur, b)
        elif layer.kind == "conv2d":
            w = ad.input_node(tape, layer.weight)
            b = ad.input_node(tape, layer.bias)
            param_nodes[f"layer{i}.weight"] = w
            param_nodes[f"layer{i}.bias"] = b
            cur = ad.conv2d(tape, cur, w, b)
        elif layer.kind == "relu":
            cur = ad.relu(tape, cur)
        elif layer.kind == "maxpool2":
            cur = ad.maxpool2(tape, cur)
        elif layer.kind == "flatten":
            cur = ad.flatten(tape, cur)
        else:
            raise ContractError(f"unknown layer kind {layer.kind!r}")
    loss_id = ad.softmax_ce_per_sample(tape, cur, labels)
    return PerSampleLoss(values=tape.node(loss_id).value, node_id=loss_id,
                         param_nodes=param_nodes)


def forward_logits(model: Model, x: np.ndarray) -> np.ndarray:
    """Inference pass with no tape; same kernels, no gradient bookkeeping."""
    from . import tensor as tz

    cur = x
    for layer in model.layers:
        if layer.kind == "dense":
            cur = cur @ layer.weight.array + layer.bias.array
        elif layer.kind == "conv2d":
            cur = tz.conv2d_forward(Tensor(cur), layer.weight, layer.bias).array
        elif layer.kind == "relu":
            cur = np.maximum(cur, 0.0)
        elif layer.kind == "maxpool2":
            cur = tz.maxpool2_forward(Tensor(cur))[0].array
        elif layer.kind == "flatten":
            cur = cur.reshape(cur.shape[0], -1)
        else:
            raise ContractError(f"unknown layer kind {layer.kind!r}")
    return cur


def top1_error(model: Model, dataset, batch_size: int = 1024) -> float:
    """Fraction of samples whose argmax logit is not the label.

    Argmax ties break toward the smallest class index (np.argmax), keeping
    the metric deterministic.
    """
    n = dataset.inputs.shape[0]
    if n == 0:
        raise ContractError("top1_error needs a nonempty split")
    wrong = 0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        logits = forward_logits(model, dataset.inputs.array[start:stop])
        preds = np.argmax(logits, axis=1)
        wrong += int(np.sum(preds != dataset.labels[start:stop]))
    return wrong / n
