import math
from typing import Annotated, Any, Optional, Tuple

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

from bido.models.enums import (
    ActivationEnum,
    FusionMethodEnum,
    ImageFormatEnum,
    InferenceHeadEnum,
    ModelVariantEnum,
)
from bido.schemas.image import ImageGeometrySchema


def _split_commas(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(int(item) for item in value.split(",") if item.strip())
    return value


IntList = Annotated[Tuple[int, ...], BeforeValidator(_split_commas)]


def conv_output(size: int, kernel_size: int, stride: int) -> int:
    """Spatial extent after a padded ('same'-style) strided convolution."""
    return (size + 2 * (kernel_size // 2) - kernel_size) // stride + 1


class BackboneConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dex_input: ImageGeometrySchema = ImageGeometrySchema(width=64, height=64)
    xml_input: ImageGeometrySchema = ImageGeometrySchema(width=64, height=64)
    dex_channels: IntList = (16, 32, 32)
    xml_channels: IntList = (16, 32, 64)
    kernel_size: int = Field(3, ge=1)
    stride: int = Field(2, ge=1)
    xml_output_dim: int = Field(64, ge=1)
    declared_dex_shape: Optional[Tuple[int, int, int]] = None

    @property
    def dex_output_shape(self) -> Tuple[int, int, int]:
        """(H', W', C) of the DEX feature map."""
        height, width = self.dex_input.height, self.dex_input.width
        for _ in self.dex_channels:
            height = conv_output(height, self.kernel_size, self.stride)
            width = conv_output(width, self.kernel_size, self.stride)
        return height, width, self.dex_channels[-1]

    @model_validator(mode="after")
    def check_contracts(self):
        if not self.dex_channels or not self.xml_channels:
            raise ValueError("each backbone needs at least one conv stage")
        if any(channels < 1 for channels in self.dex_channels + self.xml_channels):
            raise ValueError("channel counts must be positive")
        if self.declared_dex_shape is not None and tuple(
            self.declared_dex_shape
        ) != self.dex_output_shape:
            raise ValueError(
                f"declared DEX feature shape {self.declared_dex_shape} "
                f"differs from derived {self.dex_output_shape}"
            )
        return self


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    backbone: BackboneConfig = BackboneConfig()
    k: int = Field(32, ge=1)
    l: int = Field(64, ge=1)
    rank: int = Field(8, ge=1)
    margin: float = Field(1.0, gt=0, allow_inf_nan=False)
    activation: ActivationEnum = ActivationEnum.SIGMOID
    fusion: FusionMethodEnum = FusionMethodEnum.OPS
    variant: ModelVariantEnum = ModelVariantEnum.FULL
    use_metric: bool = True
    metric_epsilon: float = Field(1e-12, ge=0, allow_inf_nan=False)
    dex_mlp_hidden: IntList = (64,)
    inference_head: InferenceHeadEnum = InferenceHeadEnum.OPS

    @property
    def h(self) -> int:
        return self.backbone.xml_output_dim

    @property
    def token_length(self) -> int:
        """d = H' * W', the length of one flattened local feature map."""
        height, width, _ = self.backbone.dex_output_shape
        return height * width


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(1.0, ge=0, allow_inf_nan=False)
    beta: float = Field(1.0, ge=0, allow_inf_nan=False)
    gamma: float = Field(0.1, ge=0, allow_inf_nan=False)
    delta: float = Field(0.1, ge=0, allow_inf_nan=False)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: ModelConfig = ModelConfig()
    weights: LossWeights = LossWeights()
    batch_size: int = Field(8, ge=1)
    epochs: int = Field(64, ge=1)
    lr: float = Field(0.001, gt=0, allow_inf_nan=False)
    momentum: float = Field(0.9, ge=0, allow_inf_nan=False)
    decay_factor: float = Field(0.9, gt=0, allow_inf_nan=False)
    decay_every: int = Field(2, ge=1)
    seed: int = 0
    divergence_threshold: float = Field(1e6, gt=0)
    train_fraction: float = Field(0.8, gt=0, le=1)
    val_fraction: float = Field(0.1, ge=0, lt=1)

    def learning_rate(self, epoch: int) -> float:
        """Learning rate in effect during `epoch` (0-based)."""
        return self.lr * self.decay_factor ** (epoch // self.decay_every)


class CorpusConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(1000, ge=1)
    malicious_fraction: float = Field(0.5, ge=0, le=1)
    motif_strength: float = Field(0.8, ge=0, le=1)
    dex_signal_rate: float = Field(0.9, ge=0, le=1)
    xml_signal_rate: float = Field(0.8, ge=0, le=1)
    drift: float = Field(0.0, ge=0, allow_inf_nan=False)
    seed: int = 0
    dex_geometry: ImageGeometrySchema = ImageGeometrySchema(width=64, height=64)
    xml_geometry: ImageGeometrySchema = ImageGeometrySchema(width=64, height=64)
    image_format: ImageFormatEnum = ImageFormatEnum.PNG
    jobs: int = Field(1, ge=1)


PRESETS = {
    "desk": {"width": 64, "height": 64, "l": 64, "h": 64},
    "paper": {"width": 256, "height": 256, "l": 512, "h": 512},
}


class CliConfig(BaseModel):
    """Every tunable key of the command line, flat, with defaults.

    Read from a key=value file; unknown keys are rejected.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    preset: str = "desk"
    seed: Optional[int] = None

    # geometry
    width: int = Field(64, ge=1)
    height: int = Field(64, ge=1)
    xml_width: Optional[int] = Field(None, ge=1)
    xml_height: Optional[int] = Field(None, ge=1)
    image_format: ImageFormatEnum = ImageFormatEnum.PNG

    # backbones
    dex_channels: IntList = (16, 32, 32)
    xml_channels: IntList = (16, 32, 64)
    kernel_size: int = Field(3, ge=1)
    stride: int = Field(2, ge=1)
    dex_feature_shape: Optional[IntList] = None

    # model
    k: int = Field(32, ge=1)
    l: int = Field(64, ge=1)
    h: int = Field(64, ge=1)
    rank: int = Field(8, ge=1)
    margin: float = Field(1.0, gt=0)
    activation: ActivationEnum = ActivationEnum.SIGMOID
    fusion: FusionMethodEnum = FusionMethodEnum.OPS
    variant: ModelVariantEnum = ModelVariantEnum.FULL
    use_metric: bool = True
    metric_epsilon: float = Field(1e-12, ge=0)
    dex_mlp_hidden: IntList = (64,)
    inference_head: InferenceHeadEnum = InferenceHeadEnum.OPS

    # training
    batch_size: int = Field(8, ge=1)
    epochs: int = Field(64, ge=1)
    lr: float = Field(0.001, gt=0)
    momentum: float = Field(0.9, ge=0)
    decay_factor: float = Field(0.9, gt=0)
    decay_every: int = Field(2, ge=1)
    divergence_threshold: float = Field(1e6, gt=0)
    alpha: float = Field(1.0, ge=0)
    beta: float = Field(1.0, ge=0)
    gamma: float = Field(0.1, ge=0)
    delta: float = Field(0.1, ge=0)

    # corpus
    corpus_n: int = Field(1000, ge=1)
    malicious_fraction: float = Field(0.5, ge=0, le=1)
    motif_strength: float = Field(0.8, ge=0, le=1)
    dex_signal_rate: float = Field(0.9, ge=0, le=1)
    xml_signal_rate: float = Field(0.8, ge=0, le=1)
    drift: float = Field(0.0, ge=0)
    jobs: int = Field(1, ge=1)

    # experiments
    k_sweep: IntList = (2, 4, 8, 16, 32)
    experiment_seeds: IntList = (0, 1, 2)

    @model_validator(mode="before")
    @classmethod
    def apply_preset(cls, values: Any) -> Any:
        if not isinstance(values, dict):
            return values
        preset = values.get("preset", "desk")
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; expected one of {list(PRESETS)}")
        return {**PRESETS[preset], **values}

    @model_validator(mode="after")
    def check_finite(self):
        for name in ("margin", "lr", "momentum", "decay_factor", "alpha", "beta", "gamma", "delta", "drift"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self

    @model_validator(mode="after")
    def check_dex_feature_shape(self):
        if self.dex_feature_shape is None:
            return self
        derived = BackboneConfig(
            dex_input=self.dex_geometry(),
            dex_channels=self.dex_channels,
            kernel_size=self.kernel_size,
            stride=self.stride,
        ).dex_output_shape
        if tuple(self.dex_feature_shape) != derived:
            raise ValueError(
                f"dex_feature_shape {tuple(self.dex_feature_shape)} differs from the "
                f"(H', W', C) = {derived} the DEX backbone produces"
            )
        return self

    @property
    def resolved_seed(self) -> int:
        return self.seed if self.seed is not None else 0

    def dex_geometry(self) -> ImageGeometrySchema:
        return ImageGeometrySchema(width=self.width, height=self.height)

    def xml_geometry(self) -> ImageGeometrySchema:
        return ImageGeometrySchema(
            width=self.xml_width or self.width, height=self.xml_height or self.height
        )

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            dex_input=self.dex_geometry(),
            xml_input=self.xml_geometry(),
            dex_channels=self.dex_channels,
            xml_channels=self.xml_channels,
            kernel_size=self.kernel_size,
            stride=self.stride,
            xml_output_dim=self.h,
            declared_dex_shape=self.dex_feature_shape,
        )

    def model_settings(self) -> ModelConfig:
        return ModelConfig(
            backbone=self.backbone_config(),
            k=self.k,
            l=self.l,
            rank=self.rank,
            margin=self.margin,
            activation=self.activation,
            fusion=self.fusion,
            variant=self.variant,
            use_metric=self.use_metric,
            metric_epsilon=self.metric_epsilon,
            dex_mlp_hidden=self.dex_mlp_hidden,
            inference_head=self.inference_head,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta, gamma=self.gamma, delta=self.delta)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            model=self.model_settings(),
            weights=self.loss_weights(),
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            momentum=self.momentum,
            decay_factor=self.decay_factor,
            decay_every=self.decay_every,
            seed=self.resolved_seed,
            divergence_threshold=self.divergence_threshold,
        )

    def corpus_config(self) -> CorpusConfig:
        return CorpusConfig(
            n=self.corpus_n,
            malicious_fraction=self.malicious_fraction,
            motif_strength=self.motif_strength,
            dex_signal_rate=self.dex_signal_rate,
            xml_signal_rate=self.xml_signal_rate,
            drift=self.drift,
            seed=self.resolved_seed,
            dex_geometry=self.dex_geometry(),
            xml_geometry=self.xml_geometry(),
            image_format=self.image_format,
            jobs=self.jobs,
        )
