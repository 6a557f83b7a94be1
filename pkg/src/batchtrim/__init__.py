"""batchtrim: a small, fully deterministic neural-network training engine
whose objective keeps only the hardest fraction of each mini-batch.

Per-sample losses are computed for a batch, the highest-loss fraction p is
selected, and only those samples are averaged into the training objective;
p anneals linearly from 1.0 to 0.2 over training.  The library ships its own
float64 tensor kernels, a tape-based reverse-mode autodiff, Adam/SGD,
dataset loaders, and a seeded experiment harness that compares trimming-on
against trimming-off and writes byte-reproducible metrics CSVs.
"""

from .autodiff import GradCheckReport, Node, Tape, backward, grad_check
from .data import (
    Dataset,
    Standardization,
    batches,
    load_cifar10_bin,
    load_idx,
    split_dataset,
    standardize,
    synth_blobs,
    to_cifar10_bin,
)
from .errors import (
    ConfigError,
    ContractError,
    DataConsistencyError,
    DataFormatError,
    DataLengthError,
    EngineError,
    IndexRangeError,
    LabelError,
    ParameterError,
    ShapeError,
)
from .harness import (
    ComparisonCell,
    MetricsRow,
    TrainConfig,
    TrialResult,
    emit_csv,
    format_comparison,
    load_config,
    parse_config,
    run_experiment,
    run_trial,
)
from .model import (
    Layer,
    Model,
    PerSampleLoss,
    forward_logits,
    forward_per_sample_loss,
    init_params,
    mlp3,
    tinycnn,
    top1_error,
)
from .optim import AdamState, LrSchedule, SgdState, adam_step, lr_at_epoch, sgd_step
from .rng import Prng, derive_seed, permutation, randn
from .tensor import Tensor, conv2d_forward, create, gather_rows, matmul, maxpool2_forward
from .trim import (
    TrimPlan,
    TrimSchedule,
    fraction_at_epoch,
    full_plan,
    select_topk,
    subset_recompute_gradients,
    trim_count,
    trimmed_mean,
)

__version__ = "0.1.0"
