"""Regression CNNs with global-pool heads, activation-map explanations,
quadratic-weighted-kappa evaluation, and a synthetic retina-style dataset
for desk-scale experiments."""

from .autodiff import (
    NO_PAD,
    PadSpec,
    Tensor,
    backward,
    conv2d,
    dense,
    global_average_pool,
    leaky_relu,
    maxpool,
    mse_loss,
)
from .errors import ConfigurationError, NumericError, UsageError
from .network import (
    Checkpoint,
    CheckpointMeta,
    LayerSpec,
    Network,
    NetworkSpec,
    TransferReport,
    build,
    builtin_specs,
    count_parameters,
    init_orthogonal,
    layer_table,
    load_checkpoint,
    resolve_arch,
    save_checkpoint,
    scale_input,
    solve_pad,
    transfer_weights,
)

__version__ = "0.1.0"
