from enum import Enum, IntEnum


class ExitStatusEnum(IntEnum):
    SUCCESS = 0
    INPUT_ERROR = 2
    IO_ERROR = 3
    DIVERGENCE = 4


class IndexSectionEnum(Enum):
    STRING_IDS = "string_ids"
    TYPE_IDS = "type_ids"
    PROTO_IDS = "proto_ids"
    FIELD_IDS = "field_ids"
    METHOD_IDS = "method_ids"
    CLASS_DEFS = "class_defs"

    @property
    def entry_width(self) -> int:
        return ENTRY_WIDTHS[self]


ENTRY_WIDTHS = {
    IndexSectionEnum.STRING_IDS: 4,
    IndexSectionEnum.TYPE_IDS: 4,
    IndexSectionEnum.PROTO_IDS: 12,
    IndexSectionEnum.FIELD_IDS: 8,
    IndexSectionEnum.METHOD_IDS: 8,
    IndexSectionEnum.CLASS_DEFS: 32,
}


class InputKindEnum(Enum):
    DEX = "dex"
    XML = "xml"


class ImageFormatEnum(Enum):
    PNG = "png"
    JPEG = "jpeg"


class ActivationEnum(Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"


class FusionMethodEnum(Enum):
    OPS = "ops"
    SUMMATION = "summation"
    CONCATENATION = "concatenation"
    CROSS_ATTENTION = "cross_attention"


class ModelVariantEnum(Enum):
    FULL = "full"
    DEX_ONLY = "dex_only"
    XML_ONLY = "xml_only"


class InferenceHeadEnum(Enum):
    OPS = "ops"
    MEAN = "mean"


class LabelEnum(IntEnum):
    BENIGN = 0
    MALICIOUS = 1
