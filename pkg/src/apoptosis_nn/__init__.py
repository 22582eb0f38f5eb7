"""Feedforward network training with neuron apoptosis."""

from .apoptosis import (
    ApoptosisReport,
    LayerReport,
    MergeCandidate,
    MergeKind,
    apply_apoptosis,
    detect_candidates,
    merge_pair,
)
from .bounds import relu_error_bound, sigmoid_error_bound
from .data import Dataset, gen_abs_dataset, gen_planted_teacher, load_csv, load_idx
from .errors import ConfigError, ContractError, DivergedError, FormatError, ShapeError
from .network import (
    Activation,
    BatchActivations,
    Layer,
    LossKind,
    Network,
    activate,
    backward,
    deserialize,
    forward,
    init_network,
    param_count,
    serialize,
)
from .parallel import WorkerPool, parallel_gradient, reduce_gradients
from .schedule import PRESETS, ApoptosisConfig, factor_at, schedule_events
from .trainer import (
    MetricsRecord,
    SolverConfig,
    auc,
    compare_to_baseline,
    evaluate_accuracy,
    evaluate_auc,
    lr_at,
    pretrain_autoencoders,
    summarize_run,
    train,
)

__version__ = "0.1.0"
