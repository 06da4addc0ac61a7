from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_serializer, model_validator

from bido.models.enums import IndexSectionEnum

HEADER_SIZE = 112
DEX_MAGIC_PREFIX = b"dex\n"
ENDIAN_CONSTANT = 0x12345678


class DexHeaderSchema(BaseModel):
    """The fixed 112-byte header at the start of every DEX file."""

    model_config = ConfigDict(frozen=True)

    magic: bytes = Field(..., min_length=8, max_length=8)
    checksum: int = Field(..., ge=0, lt=2**32)
    signature: bytes = Field(..., min_length=20, max_length=20)
    file_size: int = Field(..., ge=0, lt=2**32)
    header_size: int = Field(..., ge=0, lt=2**32)
    endian_tag: int = Field(..., ge=0, lt=2**32)
    link_size: int = Field(..., ge=0, lt=2**32)
    link_off: int = Field(..., ge=0, lt=2**32)
    map_off: int = Field(..., ge=0, lt=2**32)
    string_ids_size: int = Field(..., ge=0, lt=2**32)
    string_ids_off: int = Field(..., ge=0, lt=2**32)
    type_ids_size: int = Field(..., ge=0, lt=2**32)
    type_ids_off: int = Field(..., ge=0, lt=2**32)
    proto_ids_size: int = Field(..., ge=0, lt=2**32)
    proto_ids_off: int = Field(..., ge=0, lt=2**32)
    field_ids_size: int = Field(..., ge=0, lt=2**32)
    field_ids_off: int = Field(..., ge=0, lt=2**32)
    method_ids_size: int = Field(..., ge=0, lt=2**32)
    method_ids_off: int = Field(..., ge=0, lt=2**32)
    class_defs_size: int = Field(..., ge=0, lt=2**32)
    class_defs_off: int = Field(..., ge=0, lt=2**32)
    data_size: int = Field(..., ge=0, lt=2**32)
    data_off: int = Field(..., ge=0, lt=2**32)

    def section(self, section: IndexSectionEnum) -> Tuple[int, int]:
        """Return the (entry count, byte offset) pair of an index section."""
        return (
            getattr(self, f"{section.value}_size"),
            getattr(self, f"{section.value}_off"),
        )

    @field_serializer("magic", "signature")
    def _hex(self, value: bytes) -> str:
        return value.hex()


class IndexSpanSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    section: IndexSectionEnum
    offset: int = Field(..., ge=0)
    length: int = Field(..., ge=0)

    @property
    def end(self) -> int:
        return self.offset + self.length


class IndexBytesSchema(BaseModel):
    """Concatenated index-section bytes with the spans they came from."""

    model_config = ConfigDict(frozen=True)

    data: bytes
    spans: List[IndexSpanSchema]

    @model_validator(mode="after")
    def check_provenance(self):
        if len(self.data) != sum(span.length for span in self.spans):
            raise ValueError("index bytes length differs from the span total")
        offsets = [span.offset for span in self.spans]
        if offsets != sorted(offsets):
            raise ValueError("spans must be ordered by offset")
        return self

    def __len__(self) -> int:
        return len(self.data)
