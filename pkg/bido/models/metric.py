from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Sequence, Tuple, Union

import torch
from torch import nn

from bido.models import ops
from bido.utils.errors import ConfigError, DegenerateBatch, ShapeMismatch

DISTANCE_EPSILON = 1e-12

Labels = Union[Sequence[int], torch.Tensor]


@dataclass
class PairSets:
    positive: List[Tuple[int, int]] = field(default_factory=list)
    negative: List[Tuple[int, int]] = field(default_factory=list)
    margin: float = 1.0


def mahalanobis(
    ei: torch.Tensor,
    ej: torch.Tensor,
    factor: torch.Tensor,
    epsilon: float = DISTANCE_EPSILON,
) -> torch.Tensor:
    """
    sqrt(||L^T (ei - ej)||^2 + eps), i.e. the distance under Lambda = L L^T.

    Args:
        ei (torch.Tensor): (..., h) embeddings.
        ej (torch.Tensor): (..., h) embeddings.
        factor (torch.Tensor): (h, h) lower-triangular factor L.
        epsilon (float): Added under the square root.

    Returns:
        torch.Tensor: (...) distances.
    """
    if ei.shape != ej.shape:
        raise ShapeMismatch(f"embedding shapes differ: {tuple(ei.shape)} vs {tuple(ej.shape)}")
    if factor.shape != (ei.shape[-1], ei.shape[-1]):
        raise ShapeMismatch(
            f"metric factor {tuple(factor.shape)} does not match embedding length {ei.shape[-1]}"
        )
    projected = ops.matmul(ei - ej, factor)
    return ops.sqrt(ops.hadamard(projected, projected).sum(dim=-1) + epsilon)


def build_pairs(labels: Labels, margin: float = 1.0) -> PairSets:
    """
    Split every unordered pair of a batch into same-label and different-label sets.

    Args:
        labels (Labels): Batch labels.
        margin (float): Contrastive margin, positive.

    Returns:
        PairSets: Positive and negative index pairs.
    """
    values = [int(label) for label in labels]
    if len(values) < 2:
        raise DegenerateBatch(f"pairs need at least 2 samples, batch has {len(values)}")
    if not margin > 0:
        raise ConfigError(f"margin must be positive, got {margin}")

    pairs = PairSets(margin=margin)
    for i, j in combinations(range(len(values)), 2):
        (pairs.positive if values[i] == values[j] else pairs.negative).append((i, j))
    return pairs


def contrastive_loss(
    embeddings: torch.Tensor,
    labels: Labels,
    factor: torch.Tensor,
    margin: float = 1.0,
    epsilon: float = DISTANCE_EPSILON,
) -> torch.Tensor:
    """
    Mean positive distance plus mean hinge max(0, m - d) over negatives.
    An empty pair set contributes zero.

    Args:
        embeddings (torch.Tensor): (B, h) embeddings.
        labels (Labels): B labels.
        factor (torch.Tensor): (h, h) metric factor.
        margin (float): Margin m.
        epsilon (float): Distance epsilon.

    Returns:
        torch.Tensor: Scalar loss.
    """
    pairs = build_pairs(labels, margin)
    if embeddings.dim() != 2 or embeddings.shape[0] != len(labels):
        raise ShapeMismatch(
            f"expected ({len(labels)}, h) embeddings, got {tuple(embeddings.shape)}"
        )

    loss = embeddings.new_zeros(())
    if pairs.positive:
        first, second = zip(*pairs.positive)
        distances = mahalanobis(
            embeddings[list(first)], embeddings[list(second)], factor, epsilon
        )
        loss = loss + ops.mean(distances)
    if pairs.negative:
        first, second = zip(*pairs.negative)
        distances = mahalanobis(
            embeddings[list(first)], embeddings[list(second)], factor, epsilon
        )
        loss = loss + ops.mean(ops.relu(margin - distances))
    return loss


class MahalanobisMetric(nn.Module):
    """Learnable metric; the factor starts at the identity (Euclidean)."""

    def __init__(self, dim: int, margin: float = 1.0, epsilon: float = DISTANCE_EPSILON):
        super().__init__()
        self.margin = margin
        self.epsilon = epsilon
        self.raw_factor = nn.Parameter(torch.eye(dim))

    @property
    def factor(self) -> torch.Tensor:
        return torch.tril(self.raw_factor)

    @property
    def precision(self) -> torch.Tensor:
        """Lambda = L L^T."""
        factor = self.factor
        return factor @ factor.T

    def distance(self, ei: torch.Tensor, ej: torch.Tensor) -> torch.Tensor:
        return mahalanobis(ei, ej, self.factor, self.epsilon)

    def forward(self, embeddings: torch.Tensor, labels: Labels) -> torch.Tensor:
        return contrastive_loss(embeddings, labels, self.factor, self.margin, self.epsilon)
