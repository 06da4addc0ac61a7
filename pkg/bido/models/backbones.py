"""Compact convolutional backbones for the DEX and XML images."""

from typing import Sequence

import torch
from torch import nn

from bido.models import ops
from bido.schemas.config import BackboneConfig
from bido.schemas.image import ImageGeometrySchema
from bido.utils.errors import ShapeMismatch


class ConvStack(nn.Module):
    """Strided, padded conv stages with ReLU between them, He-initialized."""

    def __init__(self, channels: Sequence[int], kernel_size: int, stride: int):
        super().__init__()
        widths = [3, *channels]
        self.stages = nn.ModuleList(
            nn.Conv2d(c_in, c_out, kernel_size, stride=stride, padding=kernel_size // 2)
            for c_in, c_out in zip(widths, widths[1:])
        )
        for stage in self.stages:
            nn.init.kaiming_normal_(stage.weight, nonlinearity="relu")
            nn.init.zeros_(stage.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for stage in self.stages:
            x = ops.relu(
                ops.conv2d(
                    x,
                    stage.weight,
                    stage.bias,
                    stride=stage.stride[0],
                    padding=stage.padding[0],
                )
            )
        return x


def _check_input(images: torch.Tensor, geometry: ImageGeometrySchema) -> None:
    expected = (3, geometry.height, geometry.width)
    if images.dim() != 4 or tuple(images.shape[1:]) != expected:
        raise ShapeMismatch(
            f"expected images of shape (B, {expected[0]}, {expected[1]}, {expected[2]}), "
            f"got {tuple(images.shape)}"
        )


class DexBackbone(nn.Module):
    """(B, 3, H, W) DEX images -> (B, C, H', W') feature maps."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.convs = ConvStack(config.dex_channels, config.kernel_size, config.stride)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        _check_input(images, self.config.dex_input)
        return self.convs(images)


class XmlBackbone(nn.Module):
    """(B, 3, H, W) XML images -> (B, h) embeddings via conv, average pool, projection."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.convs = ConvStack(config.xml_channels, config.kernel_size, config.stride)
        self.projection = nn.Linear(config.xml_channels[-1], config.xml_output_dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        _check_input(images, self.config.xml_input)
        pooled = ops.mean(ops.flatten(self.convs(images), start_dim=2), dim=-1)
        return ops.linear(pooled, self.projection.weight, self.projection.bias)
