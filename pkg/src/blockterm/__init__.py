"""Block-term decomposed linear layers and compact recurrent cells in NumPy.

The package splits into:

- :mod:`blockterm.tensor` - dense multiway arrays and contraction primitives
- :mod:`blockterm.layer` - the block-term weight, its forward/backward, counts
- :mod:`blockterm.cells` - LSTM/GRU cells with compressed input maps
- :mod:`blockterm.training` - Adam, losses, BPTT, gradient checking
- :mod:`blockterm.experiments` - reproducible desk-scale studies
- :mod:`blockterm.io` - configs, checkpoints, CSV/grid files
"""

from .tensor import FlopCounter, contract, flatten, mode_product, tensorize
from .layer import (
    BTDecomposition,
    BTGradients,
    FactorizedShape,
    flops_forward,
    flops_naive,
    init_btd,
    param_count,
    validate_ranks,
)
from .cells import (
    BTLinear,
    CellState,
    GRUCell,
    LSTMCell,
    gru_step,
    init_bt_gru,
    init_bt_lstm,
    init_dense_gru,
    init_dense_lstm,
    lstm_step,
    unroll,
)
from .training import (
    AdamState,
    BTRegressor,
    NonFiniteLossError,
    SequenceClassifier,
    TrainingConfig,
    adam_init,
    adam_step,
    bptt,
    grad_check,
    loss_mse,
    loss_xent,
)
from .experiments import (
    BenchConfig,
    FactorizationError,
    GradcheckConfig,
    RecoveryConfig,
    SequenceTaskConfig,
    SweepConfig,
    balanced_factorization,
    run_benchmark,
    run_gradcheck,
    run_recovery,
    run_sequence_task,
    run_sweep,
)
from .io import (
    CheckpointError,
    ConfigError,
    load_checkpoint,
    parse_config,
    read_csv,
    read_grid,
    save_checkpoint,
    write_csv,
    write_grid,
)

__all__ = [
    "FlopCounter",
    "contract",
    "flatten",
    "mode_product",
    "tensorize",
    "BTDecomposition",
    "BTGradients",
    "FactorizedShape",
    "flops_forward",
    "flops_naive",
    "init_btd",
    "param_count",
    "validate_ranks",
    "BTLinear",
    "CellState",
    "GRUCell",
    "LSTMCell",
    "gru_step",
    "init_bt_gru",
    "init_bt_lstm",
    "init_dense_gru",
    "init_dense_lstm",
    "lstm_step",
    "unroll",
    "AdamState",
    "BTRegressor",
    "NonFiniteLossError",
    "SequenceClassifier",
    "TrainingConfig",
    "adam_init",
    "adam_step",
    "bptt",
    "grad_check",
    "loss_mse",
    "loss_xent",
    "BenchConfig",
    "FactorizationError",
    "GradcheckConfig",
    "RecoveryConfig",
    "SequenceTaskConfig",
    "SweepConfig",
    "balanced_factorization",
    "run_benchmark",
    "run_gradcheck",
    "run_recovery",
    "run_sequence_task",
    "run_sweep",
    "CheckpointError",
    "ConfigError",
    "load_checkpoint",
    "parse_config",
    "read_csv",
    "read_grid",
    "save_checkpoint",
    "write_csv",
    "write_grid",
]
