"""Local feature selection over the DEX feature map.

Masks from 1x1 kernels pick candidate subregions, each mask yields a local map
of length d = H' * W', and single-head self-attention with an appended CLS
token summarizes the maps into the DEX embedding.
"""

import math
from typing import Optional, Sequence, Tuple

import torch
from torch import nn

from bido.models import ops
from bido.models.enums import ActivationEnum
from bido.utils.errors import ShapeMismatch


def candidate_masks(
    features: torch.Tensor,
    kernels: torch.Tensor,
    activation: ActivationEnum = ActivationEnum.SIGMOID,
) -> torch.Tensor:
    """
    M_i[x, y] = act(sum_c F[x, y, c] * phi_i[c]).

    Args:
        features (torch.Tensor): (B, C, H', W') feature maps.
        kernels (torch.Tensor): (k, C, 1, 1) mask kernels.
        activation (ActivationEnum): Sigmoid or ReLU.

    Returns:
        torch.Tensor: (B, k, H', W') masks.
    """
    if kernels.dim() != 4 or kernels.shape[2:] != (1, 1):
        raise ShapeMismatch(f"mask kernels must be (k, C, 1, 1), got {tuple(kernels.shape)}")
    logits = ops.conv2d(features, kernels)
    if activation is ActivationEnum.RELU:
        return ops.relu(logits)
    return ops.sigmoid(logits)


def local_feature_maps(features: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """
    L_i[x, y] = M_i[x, y] * mean_c F[x, y, c] / (H' * W').

    Args:
        features (torch.Tensor): (B, C, H', W').
        masks (torch.Tensor): (B, k, H', W').

    Returns:
        torch.Tensor: (B, k, H', W') local maps.
    """
    if features.dim() != 4 or masks.dim() != 4:
        raise ShapeMismatch("features and masks must be 4-d")
    if features.shape[0] != masks.shape[0] or features.shape[2:] != masks.shape[2:]:
        raise ShapeMismatch(
            f"mask shape {tuple(masks.shape)} does not match feature map {tuple(features.shape)}"
        )
    height, width = features.shape[2:]
    channel_mean = ops.mean(features, dim=1, keepdim=True)
    return ops.hadamard(masks, channel_mean) / (height * width)


def attention_weights(tokens: torch.Tensor, w_q: torch.Tensor, w_k: torch.Tensor) -> torch.Tensor:
    """Row-wise SoftMax(Q K^T / sqrt(d)) for (B, n, d) tokens."""
    d = tokens.shape[-1]
    queries = ops.matmul(tokens, w_q)
    keys = ops.matmul(tokens, w_k)
    return ops.softmax(ops.matmul(queries, keys.transpose(-1, -2)) / math.sqrt(d), dim=-1)


def attend_local(
    local_maps: torch.Tensor,
    cls_token: torch.Tensor,
    positional: torch.Tensor,
    w_q: torch.Tensor,
    w_k: torch.Tensor,
    w_v: torch.Tensor,
) -> torch.Tensor:
    """
    Self-attention over the flattened local maps with the CLS token appended last.

    X = [L; CLS] + P, E = SoftMax(X W_Q (X W_K)^T / sqrt(d)) X W_V.

    Args:
        local_maps (torch.Tensor): (B, k, H', W') local maps.
        cls_token (torch.Tensor): (d,) classification token.
        positional (torch.Tensor): (k + 1, d) positional embedding.
        w_q (torch.Tensor): (d, d) query projection.
        w_k (torch.Tensor): (d, d) key projection.
        w_v (torch.Tensor): (d, d) value projection.

    Returns:
        torch.Tensor: (B, k + 1, d) attended tokens; row k is the CLS position.
    """
    tokens = ops.flatten(local_maps, start_dim=2)
    batch, count, d = tokens.shape
    if cls_token.shape != (d,):
        raise ShapeMismatch(f"CLS token must have length {d}, got {tuple(cls_token.shape)}")
    if positional.shape != (count + 1, d):
        raise ShapeMismatch(
            f"positional embedding must be ({count + 1}, {d}), got {tuple(positional.shape)}"
        )
    for name, weight in (("W_Q", w_q), ("W_K", w_k), ("W_V", w_v)):
        if weight.shape != (d, d):
            raise ShapeMismatch(f"{name} must be ({d}, {d}), got {tuple(weight.shape)}")

    x = ops.add(ops.concat([tokens, cls_token.expand(batch, 1, d)], dim=1), positional)
    weights = attention_weights(x, w_q, w_k)
    return ops.matmul(weights, ops.matmul(x, w_v))


def project_dex(
    attended: torch.Tensor, layers: Sequence[Tuple[torch.Tensor, torch.Tensor]]
) -> torch.Tensor:
    """
    Read the CLS row of the attended tokens out through an MLP.

    Args:
        attended (torch.Tensor): (B, k + 1, d) output of attend_local.
        layers (Sequence[Tuple[torch.Tensor, torch.Tensor]]): (weight, bias)
            pairs in nn.Linear layout; ReLU between layers, none after the last.

    Returns:
        torch.Tensor: (B, l) DEX embedding.
    """
    hidden = attended[:, -1, :]
    for position, (weight, bias) in enumerate(layers):
        hidden = ops.linear(hidden, weight, bias)
        if position < len(layers) - 1:
            hidden = ops.relu(hidden)
    return hidden


class LocalFeatureSelector(nn.Module):
    """
    Masks, local maps, attention and the CLS read-out as one module.

    The local maps enter attention multiplied by `token_gain` (d by default),
    which undoes the 1 / (H' * W') prefactor so tokens start on the scale of the
    feature map. Projections start at fan-in scale so the DEX embedding keeps
    that scale.
    """

    def __init__(
        self,
        channels: int,
        token_length: int,
        k: int,
        output_dim: int,
        activation: ActivationEnum = ActivationEnum.SIGMOID,
        mlp_hidden: Sequence[int] = (64,),
        token_gain: Optional[float] = None,
    ):
        super().__init__()
        self.k = k
        self.activation = activation
        self.token_gain = float(token_length) if token_gain is None else token_gain
        self.mask_kernels = nn.Parameter(_uniform((k, channels, 1, 1), channels))
        self.cls_token = nn.Parameter(torch.zeros(token_length))
        self.positional = nn.Parameter(torch.zeros(k + 1, token_length))
        self.w_q = nn.Parameter(_normal((token_length, token_length), token_length))
        self.w_k = nn.Parameter(_normal((token_length, token_length), token_length))
        self.w_v = nn.Parameter(_normal((token_length, token_length), token_length))

        widths = [token_length, *mlp_hidden, output_dim]
        last = len(widths) - 2
        # ReLU follows every layer but the last
        self.mlp_weights = nn.ParameterList(
            nn.Parameter(_normal((fan_out, fan_in), fan_in, gain=1.0 if i == last else 2.0))
            for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:]))
        )
        self.mlp_biases = nn.ParameterList(
            nn.Parameter(torch.zeros(fan_out)) for fan_out in widths[1:]
        )

    def masks(self, features: torch.Tensor) -> torch.Tensor:
        return candidate_masks(features, self.mask_kernels, self.activation)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        local_maps = local_feature_maps(features, self.masks(features)) * self.token_gain
        attended = attend_local(
            local_maps, self.cls_token, self.positional, self.w_q, self.w_k, self.w_v
        )
        return project_dex(attended, list(zip(self.mlp_weights, self.mlp_biases)))


def _uniform(shape: Tuple[int, ...], fan_in: int) -> torch.Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return torch.empty(shape).uniform_(-bound, bound)


def _normal(shape: Tuple[int, ...], fan_in: int, gain: float = 1.0) -> torch.Tensor:
    """Zero-mean normal with variance gain / fan_in."""
    return nn.init.normal_(torch.empty(shape), std=math.sqrt(gain / fan_in))
