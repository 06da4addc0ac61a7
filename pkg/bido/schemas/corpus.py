from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from bido.models.enums import LabelEnum


class SampleSpecSchema(BaseModel):
    """Recipe for one synthetic DEX/XML pair."""

    model_config = ConfigDict(frozen=True)

    label: LabelEnum
    seed: int = Field(..., ge=0)
    string_ids: int = Field(0, ge=0)
    type_ids: int = Field(0, ge=0)
    proto_ids: int = Field(0, ge=0)
    field_ids: int = Field(0, ge=0)
    method_ids: int = Field(0, ge=0)
    class_defs: int = Field(0, ge=0)
    permissions: int = Field(0, ge=0)
    motif_strength: float = Field(0.8, ge=0, le=1, allow_inf_nan=False)
    drift: float = Field(0.0, ge=0, allow_inf_nan=False)
    dex_signal: bool = True
    xml_signal: bool = True


class JunkInsertion(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["junk"] = "junk"
    rate: float = Field(0.5, ge=0, allow_inf_nan=False)


class IdentifierRandomization(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["rename"] = "rename"
    seed: int = Field(0, ge=0)


class StringEncryptionSim(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["encrypt"] = "encrypt"
    key: int = Field(0x5A, ge=1, le=255)


class Realignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["align"] = "align"
    pad: int = Field(16, ge=0)


class SignatureRewrite(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["signature"] = "signature"
    seed: int = Field(0, ge=0)


class ControlFlowSim(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["controlflow"] = "controlflow"
    seed: int = Field(0, ge=0)
    size: int = Field(256, ge=0)


ObfuscationTransform = Annotated[
    Union[
        JunkInsertion,
        IdentifierRandomization,
        StringEncryptionSim,
        Realignment,
        SignatureRewrite,
        ControlFlowSim,
    ],
    Field(discriminator="kind"),
]

_PARAMETER = {
    "junk": "rate",
    "rename": "seed",
    "encrypt": "key",
    "align": "pad",
    "signature": "seed",
    "controlflow": "seed",
}
_adapter = TypeAdapter(ObfuscationTransform)


def parse_transforms(text: Optional[str]) -> List[ObfuscationTransform]:
    """
    Parse "junk:0.5,rename:7,encrypt" into transforms; a bare kind keeps its default.

    Args:
        text (Optional[str]): Comma-separated kind[:parameter] items.

    Returns:
        List[ObfuscationTransform]: The transforms, in order.
    """
    transforms = []
    for item in (text or "").split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, parameter = item.partition(":")
        kind = kind.strip()
        values = {"kind": kind}
        if parameter and kind in _PARAMETER:
            values[_PARAMETER[kind]] = parameter.strip()
        transforms.append(_adapter.validate_python(values))
    return transforms


def describe_transform(transform: ObfuscationTransform) -> str:
    return f"{transform.kind}:{getattr(transform, _PARAMETER[transform.kind])}"


class SamplePairSchema(BaseModel):
    """One in-memory labeled DEX/XML pair."""

    id: str
    label: LabelEnum
    seed: int
    drift: float
    dex: bytes
    xml: bytes
    transforms: List[str] = []


class GeneratedCorpusSchema(BaseModel):
    """Clean pairs and, when transforms were requested, their obfuscated twins (same order)."""

    clean: List[SamplePairSchema]
    obfuscated: List[SamplePairSchema] = []


class CorpusRecordSchema(BaseModel):
    id: str
    label: LabelEnum
    seed: int
    drift: float
    transforms: List[str] = []
    dex_path: str
    xml_path: str
    dex_image_path: str
    xml_image_path: str
    dex_truncated: bool = False
    xml_truncated: bool = False


class CorpusManifestSchema(BaseModel):
    root: str
    records: List[CorpusRecordSchema]

    def __len__(self) -> int:
        return len(self.records)
