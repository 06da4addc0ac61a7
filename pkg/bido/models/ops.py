"""Shape- and finiteness-checked tensor primitives.

Thin wrappers over torch ops; autograd records them, so every primitive is
differentiable. A non-finite result raises NonFinite instead of propagating.
"""

import math
from typing import Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from bido.utils.errors import NoConvergence, NonFinite, ShapeMismatch


def check_finite(tensor: torch.Tensor, op: str) -> torch.Tensor:
    if not torch.isfinite(tensor).all():
        raise NonFinite(f"{op} produced non-finite values")
    return tensor


def _broadcast(a: torch.Tensor, b: torch.Tensor, op: str) -> None:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeMismatch(f"{op}: shapes {tuple(a.shape)} and {tuple(b.shape)} do not broadcast")


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() < 1 or b.dim() < 1:
        raise ShapeMismatch("matmul: scalar operands")
    inner_b = b.shape[-2] if b.dim() > 1 else b.shape[0]
    if a.shape[-1] != inner_b:
        raise ShapeMismatch(f"matmul: {tuple(a.shape)} @ {tuple(b.shape)}")
    return check_finite(torch.matmul(a, b), "matmul")


def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _broadcast(a, b, "add")
    return check_finite(a + b, "add")


def hadamard(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _broadcast(a, b, "hadamard")
    return check_finite(a * b, "hadamard")


def outer_product(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """x (..., n), y (..., m) -> (..., n, m) with out[..., i, j] = x[..., i] * y[..., j]."""
    if x.shape[:-1] != y.shape[:-1]:
        raise ShapeMismatch(f"outer_product: leading dims {tuple(x.shape)} vs {tuple(y.shape)}")
    return check_finite(x.unsqueeze(-1) * y.unsqueeze(-2), "outer_product")


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return check_finite(torch.softmax(x, dim=dim), "softmax")


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    return check_finite(torch.sigmoid(x), "sigmoid")


def relu(x: torch.Tensor) -> torch.Tensor:
    return check_finite(torch.relu(x), "relu")


def mean(x: torch.Tensor, dim: Optional[int] = None, keepdim: bool = False) -> torch.Tensor:
    if x.numel() == 0:
        raise ShapeMismatch("mean of an empty tensor")
    out = x.mean() if dim is None else x.mean(dim=dim, keepdim=keepdim)
    return check_finite(out, "mean")


def conv2d(
    x: torch.Tensor,
    weight: torch.Tensor,
    bias: Optional[torch.Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> torch.Tensor:
    """x (B, C_in, H, W), weight (C_out, C_in, kh, kw)."""
    if x.dim() != 4 or weight.dim() != 4:
        raise ShapeMismatch(f"conv2d expects 4-d input and weight, got {x.dim()} and {weight.dim()}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv2d: input has {x.shape[1]} channels, kernel expects {weight.shape[1]}")
    return check_finite(F.conv2d(x, weight, bias, stride=stride, padding=padding), "conv2d")


def linear(x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """x (..., in) with weight (out, in) laid out like nn.Linear."""
    out = matmul(x, weight.T)
    return add(out, bias) if bias is not None else out


def flatten(x: torch.Tensor, start_dim: int = 1) -> torch.Tensor:
    return torch.flatten(x, start_dim=start_dim)


def concat(tensors: Sequence[torch.Tensor], dim: int = -1) -> torch.Tensor:
    try:
        out = torch.cat(list(tensors), dim=dim)
    except RuntimeError as exc:
        raise ShapeMismatch(f"concat: {exc}")
    return check_finite(out, "concat")


def sqrt(x: torch.Tensor) -> torch.Tensor:
    return check_finite(torch.sqrt(x), "sqrt")


def l2norm(x: torch.Tensor, dim: int = -1, keepdim: bool = False) -> torch.Tensor:
    return check_finite(torch.linalg.vector_norm(x, dim=dim, keepdim=keepdim), "l2norm")


def svd_truncated(
    matrix: torch.Tensor,
    rank: int,
    max_sweeps: int = 100,
    tolerance: float = 1e-12,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Rank-R singular value decomposition by one-sided Jacobi rotations.

    Args:
        matrix (torch.Tensor): A rows x cols matrix.
        rank (int): Number of singular triplets to keep, 1 <= rank <= min(rows, cols).
        max_sweeps (int): Sweep cap before NoConvergence.
        tolerance (float): Relative off-diagonal tolerance.

    Returns:
        Tuple[torch.Tensor, torch.Tensor, torch.Tensor]: U (rows x R), S (R,)
        descending and non-negative, V (cols x R); U and V have orthonormal columns.
    """
    if matrix.dim() != 2:
        raise ShapeMismatch(f"svd expects a matrix, got shape {tuple(matrix.shape)}")
    rows, cols = matrix.shape
    if not 1 <= rank <= min(rows, cols):
        raise ShapeMismatch(f"rank {rank} outside [1, {min(rows, cols)}]")

    transposed = rows < cols
    with torch.no_grad():
        work = (matrix.T if transposed else matrix).detach().to(torch.float64).clone()
        width = work.shape[1]
        right = torch.eye(width, dtype=torch.float64)

        for _ in range(max_sweeps):
            rotated = False
            for p in range(width - 1):
                for q in range(p + 1, width):
                    col_p, col_q = work[:, p], work[:, q]
                    alpha = float(col_p.dot(col_p))
                    beta = float(col_q.dot(col_q))
                    gamma = float(col_p.dot(col_q))
                    if gamma == 0.0 or abs(gamma) <= tolerance * math.sqrt(alpha * beta):
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                    c = 1.0 / math.sqrt(1.0 + t * t)
                    s = c * t
                    for target in (work, right):
                        old_p = target[:, p].clone()
                        target[:, p] = c * old_p - s * target[:, q]
                        target[:, q] = s * old_p + c * target[:, q]
            if not rotated:
                break
        else:
            raise NoConvergence(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

        singular = torch.linalg.vector_norm(work, dim=0)
        order = torch.argsort(singular, descending=True, stable=True)[:rank]
        singular = singular[order]
        left = work[:, order].clone()
        right = right[:, order].clone()

        floor = max(float(singular[0]), 1.0) * 1e-14
        for j in range(rank):
            if float(singular[j]) > floor:
                left[:, j] /= singular[j]
            else:
                left[:, j] = _orthogonal_complement(left[:, :j], left.shape[0])

    if transposed:
        return right, singular, left
    return left, singular, right


def _orthogonal_complement(basis: torch.Tensor, size: int) -> torch.Tensor:
    """A unit vector orthogonal to the columns of `basis` (Gram-Schmidt on e_i)."""
    for i in range(size):
        candidate = torch.zeros(size, dtype=torch.float64)
        candidate[i] = 1.0
        for _ in range(2):
            if basis.shape[1]:
                candidate = candidate - basis @ (basis.T @ candidate)
        norm = torch.linalg.vector_norm(candidate)
        if norm > 1e-8:
            return candidate / norm
    raise NoConvergence("could not complete an orthonormal basis")
