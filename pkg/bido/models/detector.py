from dataclasses import dataclass
from typing import List, Optional

import torch
from torch import nn

from bido.models import ops
from bido.models.backbones import DexBackbone, XmlBackbone
from bido.models.enums import InferenceHeadEnum, ModelVariantEnum
from bido.models.fusion import build_fusion
from bido.models.local_select import LocalFeatureSelector
from bido.models.metric import MahalanobisMetric
from bido.schemas.config import ModelConfig
from bido.utils.errors import ShapeMismatch

NUM_CLASSES = 2


@dataclass
class ModelOutput:
    """Embeddings and per-head logits; absent branches are None."""

    z_xml: Optional[torch.Tensor] = None
    z_dex: Optional[torch.Tensor] = None
    z_ops: Optional[torch.Tensor] = None
    logits_xml: Optional[torch.Tensor] = None
    logits_dex: Optional[torch.Tensor] = None
    logits_ops: Optional[torch.Tensor] = None

    @property
    def embedding(self) -> torch.Tensor:
        """The embedding the metric head works on: fused if present, else the single branch."""
        for z in (self.z_ops, self.z_dex, self.z_xml):
            if z is not None:
                return z
        raise ShapeMismatch("model produced no embedding")

    @property
    def primary_logits(self) -> torch.Tensor:
        for logits in (self.logits_ops, self.logits_dex, self.logits_xml):
            if logits is not None:
                return logits
        raise ShapeMismatch("model produced no logits")

    @property
    def all_logits(self) -> List[torch.Tensor]:
        return [
            logits
            for logits in (self.logits_xml, self.logits_dex, self.logits_ops)
            if logits is not None
        ]


class BidoDetector(nn.Module):
    """
    Hybrid detector: a DEX branch with local feature selection, an XML branch,
    cross-modal fusion, a Mahalanobis metric head and three classification heads.

    The `dex_only` variant drops the XML branch and fusion, `xml_only` drops the
    DEX branch and fusion; the metric head then works on the remaining embedding.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        variant = config.variant
        backbone = config.backbone

        self.uses_dex = variant in (ModelVariantEnum.FULL, ModelVariantEnum.DEX_ONLY)
        self.uses_xml = variant in (ModelVariantEnum.FULL, ModelVariantEnum.XML_ONLY)

        metric_dim = config.h
        if self.uses_dex:
            _, _, channels = backbone.dex_output_shape
            self.dex_backbone = DexBackbone(backbone)
            self.selector = LocalFeatureSelector(
                channels=channels,
                token_length=config.token_length,
                k=config.k,
                output_dim=config.l,
                activation=config.activation,
                mlp_hidden=config.dex_mlp_hidden,
            )
            self.head_dex = nn.Linear(config.l, NUM_CLASSES)
            metric_dim = config.l
        if self.uses_xml:
            self.xml_backbone = XmlBackbone(backbone)
            self.head_xml = nn.Linear(config.h, NUM_CLASSES)
            metric_dim = config.h
        if variant is ModelVariantEnum.FULL:
            self.fusion = build_fusion(config.fusion, config.h, config.l, config.rank)
            self.head_ops = nn.Linear(config.h, NUM_CLASSES)
            metric_dim = config.h

        self.metric = MahalanobisMetric(metric_dim, config.margin, config.metric_epsilon)
        self.to(torch.float64)

    def forward(
        self, dex_images: Optional[torch.Tensor], xml_images: Optional[torch.Tensor]
    ) -> ModelOutput:
        output = ModelOutput()
        if self.uses_dex:
            output.z_dex = self.selector(self.dex_backbone(dex_images))
            output.logits_dex = ops.linear(output.z_dex, self.head_dex.weight, self.head_dex.bias)
        if self.uses_xml:
            output.z_xml = self.xml_backbone(xml_images)
            output.logits_xml = ops.linear(output.z_xml, self.head_xml.weight, self.head_xml.bias)
        if self.uses_dex and self.uses_xml:
            output.z_ops = self.fusion(output.z_xml, output.z_dex)
            output.logits_ops = ops.linear(output.z_ops, self.head_ops.weight, self.head_ops.bias)
        return output

    def probabilities(self, output: ModelOutput) -> torch.Tensor:
        """(B, 2) class probabilities from the configured inference head."""
        if self.config.inference_head is InferenceHeadEnum.MEAN:
            return torch.stack([ops.softmax(logits) for logits in output.all_logits]).mean(dim=0)
        return ops.softmax(output.primary_logits)

    @torch.no_grad()
    def predict(self, dex_images: torch.Tensor, xml_images: torch.Tensor) -> torch.Tensor:
        """Argmax labels (0 benign, 1 malicious)."""
        return self.probabilities(self(dex_images, xml_images)).argmax(dim=-1)
