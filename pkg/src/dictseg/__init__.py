"""Dynamic class-dictionary semantic segmentation, desk scale.

A self-contained numpy implementation: explicit class-ID embedding
dictionaries, an input-conditioned dictionary modulator, an alternating
cross-attention decoder, dual-branch training with a dictionary
contrastive loss, and a full train/eval/ablate harness on synthetic
fine-grained data.
"""

from .config import RunConfig, load_config, parse_config_text, serialize_config
from .errors import (
    ConfigError,
    DataError,
    DictsegError,
    DimensionError,
    FormatError,
    NumericalError,
)
from .gradcheck import check_gradients
from .losses import (
    ContrastiveResult,
    LossBreakdown,
    LossWeights,
    contrastive_loss,
    cross_entropy,
    dice_loss,
    total_loss,
)
from .metrics import ConfusionMatrix, MetricReport, accumulate, iou_f1, overall_accuracy
from .model import ForwardResult, Model
from .rng import Rng
from .tensor import (
    Parameter,
    Tensor,
    interpolate_bilinear,
    matmul,
    no_grad,
    softmax_rows,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConfusionMatrix",
    "ContrastiveResult",
    "DataError",
    "DictsegError",
    "DimensionError",
    "FormatError",
    "ForwardResult",
    "LossBreakdown",
    "LossWeights",
    "MetricReport",
    "Model",
    "NumericalError",
    "Parameter",
    "Rng",
    "RunConfig",
    "Tensor",
    "accumulate",
    "check_gradients",
    "contrastive_loss",
    "cross_entropy",
    "dice_loss",
    "interpolate_bilinear",
    "iou_f1",
    "load_config",
    "matmul",
    "no_grad",
    "overall_accuracy",
    "parse_config_text",
    "serialize_config",
    "softmax_rows",
    "total_loss",
    "__version__",
]
