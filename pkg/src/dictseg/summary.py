"""Model accounting: exact parameter counts and analytic MAC estimates.

Parameter counts are closed-form sums over the layers the configuration
actually creates (tests cross-check them against an instantiated model).
The MAC estimate covers one inference forward (dynamic branch) for a
single image at the configured size: convolutions, linear maps, and
attention products count multiply-accumulates; pooling, nonlinearities,
softmax, and attention scaling count one operation per element; bilinear
resampling counts two operations per output element per pass.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import RunConfig
from .encoder import N_STAGES


def linear_param_count(c_in: int, c_out: int) -> int:
    return c_in * c_out + c_out


def conv_param_count(c_in: int, c_out: int) -> int:
    return c_out * c_in * 9 + c_out


@dataclass
class ModelSummary:
    param_count: int
    mac_estimate: int

    def render(self) -> str:
        return (
            f"parameters = {self.param_count}\n"
            f"forward_macs = {self.mac_estimate}\n"
        )


def count_parameters(config: RunConfig) -> int:
    c_embed = config.embed_channels
    ec = config.encoder_config()
    total = 0
    c_prev = 3
    for i in range(1, N_STAGES + 1):
        c_i = ec.stage_channels(i)
        total += conv_param_count(c_prev, c_i) + conv_param_count(c_i, c_i)
        c_prev = c_i
    total += linear_param_count(ec.stage_channels(1), c_embed)
    if config.aggregator:
        for i in range(2, N_STAGES + 1):
            total += linear_param_count(ec.stage_channels(i), c_embed)
        total += linear_param_count(4 * c_embed, c_embed)
    total += config.n_classes * c_embed
    if config.modulator:
        half = ec.deep_channels // 2
        total += 2 * linear_param_count(half, half)
        total += linear_param_count(ec.deep_channels, config.n_classes * config.reduction)
        total += linear_param_count(c_embed, config.reduction * c_embed)
    total += linear_param_count(c_embed, c_embed)
    return total


def _resize_ops(h_in: int, w_in: int, h_out: int, w_out: int, channels: int) -> int:
    if (h_in, w_in) == (h_out, w_out):
        return 0
    return 2 * channels * (h_out * w_in) + 2 * channels * (h_out * w_out)


def estimate_macs(config: RunConfig) -> int:
    size = config.image_size
    c_embed = config.embed_channels
    n = config.n_classes
    ec = config.encoder_config()

    total = 0
    c_prev = 3
    for i in range(1, N_STAGES + 1):
        c_i = ec.stage_channels(i)
        h_i = size >> i
        p_i = h_i * h_i
        total += c_prev * c_i * 9 * p_i  # stride-2 conv
        total += c_i * p_i  # nonlinearity
        total += c_i * c_i * 9 * p_i  # stride-1 conv
        c_prev = c_i
    h1 = size >> 1
    p1 = h1 * h1

    if config.aggregator:
        for i in range(1, N_STAGES + 1):
            c_i = ec.stage_channels(i)
            h_i = size >> i
            total += (h_i * h_i) * c_i * c_embed  # 1x1 projection
            total += _resize_ops(h_i, h_i, h1, h1, c_embed)
        total += p1 * (4 * c_embed) * c_embed  # fusion
    else:
        total += p1 * ec.stage_channels(1) * c_embed

    if config.modulator:
        c4 = ec.deep_channels
        h4 = size >> N_STAGES
        p4 = h4 * h4
        half = c4 // 2
        total += half * p4 * 2  # average and max pooling
        total += half * half * 2  # pooled-branch linear maps
        total += c4 * n * config.reduction  # fusion to mixture logits
        total += n * config.reduction  # softmax
        total += n * c_embed * (config.reduction * c_embed)  # candidate expansion
        total += n * config.reduction * c_embed  # weighted candidate sum

    if config.interaction:
        per_stage = 4 * n * p1 * c_embed + 2 * n * p1  # products + scaling
        per_stage += 2 * n * p1  # softmax rows, both directions
        total += config.stages * per_stage

    total += n * c_embed * c_embed  # head projection of the dictionary
    total += _resize_ops(h1, h1, 2 * h1, 2 * h1, c_embed)
    total += (4 * p1) * c_embed * n  # per-pixel class scores
    return total


def model_summary(config: RunConfig) -> ModelSummary:
    return ModelSummary(count_parameters(config), estimate_macs(config))
