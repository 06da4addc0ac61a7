import math
from dataclasses import dataclass

import torch
from torch import nn

from bido.models import ops
from bido.models.enums import FusionMethodEnum
from bido.schemas.report import SpectrumReportSchema
from bido.utils.errors import ShapeMismatch

NORM_EPSILON = 1e-12
# singular values at or below this count as zero when reporting numerical rank
RANK_TOLERANCE = 1e-10


@dataclass
class OpsMatrix:
    """Frobenius-normalized outer product; matrix rows follow Z_xml, columns Z_dex."""

    matrix: torch.Tensor
    norm: torch.Tensor


def ops_matrix(zx: torch.Tensor, zd: torch.Tensor) -> OpsMatrix:
    """
    D = (zx outer zd) / ||zx outer zd||_F, with D = 0 and norm = 0 for a zero product.

    Args:
        zx (torch.Tensor): (..., h) XML embedding.
        zd (torch.Tensor): (..., l) DEX embedding.

    Returns:
        OpsMatrix: (..., h, l) matrix and (...) norms.
    """
    raw = ops.outer_product(zx, zd)
    norm = ops.l2norm(ops.flatten(raw, start_dim=raw.dim() - 2), dim=-1)
    safe = torch.where(norm > 0, norm, torch.ones_like(norm))
    return OpsMatrix(matrix=raw / safe[..., None, None], norm=norm)


def factorize(
    zx: torch.Tensor,
    zd: torch.Tensor,
    u: torch.Tensor,
    v: torch.Tensor,
    epsilon: float = NORM_EPSILON,
) -> torch.Tensor:
    """
    Z_ops[kk] = sum_r (u[kk, r] . zx)(v[kk, r] . zd) / max(||zx|| ||zd||, eps).

    Equals sum_r <D, u[kk, r] v[kk, r]^T>_F without materializing D.

    Args:
        zx (torch.Tensor): (B, h) XML embeddings.
        zd (torch.Tensor): (B, l) DEX embeddings.
        u (torch.Tensor): (out, R, h) left factors.
        v (torch.Tensor): (out, R, l) right factors.
        epsilon (float): Norm floor.

    Returns:
        torch.Tensor: (B, out) fused embeddings.
    """
    if u.dim() != 3 or v.dim() != 3 or u.shape[:2] != v.shape[:2]:
        raise ShapeMismatch(f"factor banks disagree: {tuple(u.shape)} vs {tuple(v.shape)}")
    if zx.shape[-1] != u.shape[-1] or zd.shape[-1] != v.shape[-1]:
        raise ShapeMismatch(
            f"embeddings ({zx.shape[-1]}, {zd.shape[-1]}) do not match factors "
            f"({u.shape[-1]}, {v.shape[-1]})"
        )
    outputs, rank = u.shape[:2]
    left = ops.matmul(zx, u.reshape(outputs * rank, -1).T).reshape(-1, outputs, rank)
    right = ops.matmul(zd, v.reshape(outputs * rank, -1).T).reshape(-1, outputs, rank)
    scale = torch.clamp(ops.hadamard(ops.l2norm(zx), ops.l2norm(zd)), min=epsilon)
    return ops.hadamard(left, right).sum(dim=-1) / scale[:, None]


def svd_analysis(matrix: torch.Tensor, rank: int) -> SpectrumReportSchema:
    """
    Singular spectrum of a materialized OPS matrix (or a batch mean of them).

    Args:
        matrix (torch.Tensor): (h, l) matrix.
        rank (int): Number of singular values to report.

    Returns:
        SpectrumReportSchema: The spectrum and its numerical rank.
    """
    _, singular, _ = ops.svd_truncated(matrix, rank)
    values = [float(value) for value in singular]
    return SpectrumReportSchema(
        rank=rank,
        rows=matrix.shape[0],
        cols=matrix.shape[1],
        singular_values=values,
        numerical_rank=sum(value > RANK_TOLERANCE for value in values),
    )


class FactorizedOps(nn.Module):
    """
    Learnable rank-R bilinear projection of the OPS matrix.

    On unit-norm inputs u . x has variance Var(u) and v . z has Var(v), so u
    starts at unit variance and v at 1 / R, giving unit-variance outputs.
    """

    def __init__(self, h: int, l: int, rank: int, epsilon: float = NORM_EPSILON):
        super().__init__()
        self.epsilon = epsilon
        bound_u = math.sqrt(3.0)
        bound_v = math.sqrt(3.0 / rank)
        self.u = nn.Parameter(torch.empty(h, rank, h).uniform_(-bound_u, bound_u))
        self.v = nn.Parameter(torch.empty(h, rank, l).uniform_(-bound_v, bound_v))

    def forward(self, zx: torch.Tensor, zd: torch.Tensor) -> torch.Tensor:
        return factorize(zx, zd, self.u, self.v, self.epsilon)


class SummationFusion(nn.Module):
    """zx + W zd."""

    def __init__(self, h: int, l: int):
        super().__init__()
        self.dex_projection = nn.Linear(l, h, bias=False)

    def forward(self, zx: torch.Tensor, zd: torch.Tensor) -> torch.Tensor:
        return ops.add(zx, ops.linear(zd, self.dex_projection.weight))


class ConcatenationFusion(nn.Module):
    """W [zx; zd] + b."""

    def __init__(self, h: int, l: int):
        super().__init__()
        self.projection = nn.Linear(h + l, h)

    def forward(self, zx: torch.Tensor, zd: torch.Tensor) -> torch.Tensor:
        joined = ops.concat([zx, zd], dim=-1)
        return ops.linear(joined, self.projection.weight, self.projection.bias)


class CrossAttentionFusion(nn.Module):
    """The XML embedding attends over itself and the projected DEX embedding."""

    def __init__(self, h: int, l: int):
        super().__init__()
        self.dex_projection = nn.Linear(l, h, bias=False)
        self.query = nn.Linear(h, h, bias=False)
        self.key = nn.Linear(h, h, bias=False)
        self.value = nn.Linear(h, h, bias=False)

    def forward(self, zx: torch.Tensor, zd: torch.Tensor) -> torch.Tensor:
        dex = ops.linear(zd, self.dex_projection.weight)
        tokens = torch.stack([zx, dex], dim=1)
        query = ops.linear(zx, self.query.weight).unsqueeze(1)
        keys = ops.linear(tokens, self.key.weight)
        scores = ops.matmul(query, keys.transpose(-1, -2)) / math.sqrt(zx.shape[-1])
        attended = ops.matmul(ops.softmax(scores, dim=-1), ops.linear(tokens, self.value.weight))
        return attended.squeeze(1)


def build_fusion(method: FusionMethodEnum, h: int, l: int, rank: int) -> nn.Module:
    if method is FusionMethodEnum.OPS:
        return FactorizedOps(h, l, rank)
    if method is FusionMethodEnum.SUMMATION:
        return SummationFusion(h, l)
    if method is FusionMethodEnum.CONCATENATION:
        return ConcatenationFusion(h, l)
    return CrossAttentionFusion(h, l)
