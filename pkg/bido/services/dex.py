import hashlib
import struct
import zlib
from typing import List

from bido.models.enums import IndexSectionEnum
from bido.schemas.dex import (
    DEX_MAGIC_PREFIX,
    ENDIAN_CONSTANT,
    HEADER_SIZE,
    DexHeaderSchema,
    IndexBytesSchema,
    IndexSpanSchema,
)
from bido.utils.errors import (
    BadHeaderSize,
    BadMagic,
    ChecksumMismatch,
    OutOfBounds,
    Overlap,
    TooShort,
    UnsupportedEndian,
)

# magic, checksum, signature, then twenty little-endian u32 fields
HEADER_STRUCT = struct.Struct("<8sI20s20I")
HEADER_FIELDS = (
    "file_size",
    "header_size",
    "endian_tag",
    "link_size",
    "link_off",
    "map_off",
    "string_ids_size",
    "string_ids_off",
    "type_ids_size",
    "type_ids_off",
    "proto_ids_size",
    "proto_ids_off",
    "field_ids_size",
    "field_ids_off",
    "method_ids_size",
    "method_ids_off",
    "class_defs_size",
    "class_defs_off",
    "data_size",
    "data_off",
)


class DexServices:
    """
    Parses DEX byte streams and extracts the index sections that get imaged.
    """

    @staticmethod
    def parse_header(raw: bytes) -> DexHeaderSchema:
        """
        Decode and validate the DEX header.

        Args:
            raw (bytes): The complete DEX byte stream.

        Returns:
            DexHeaderSchema: The decoded header.

        Raises:
            TooShort: fewer than 112 bytes.
            BadMagic: the stream does not start with "dex\\n".
            OutOfBounds: a section or the declared file size exceeds the stream.
            Overlap: two index sections intersect.
        """
        if len(raw) < HEADER_SIZE:
            raise TooShort(f"DEX stream is {len(raw)} bytes, header needs {HEADER_SIZE}")
        if raw[:4] != DEX_MAGIC_PREFIX:
            raise BadMagic(f"bad DEX magic {raw[:4].hex()}")

        magic, checksum, signature, *words = HEADER_STRUCT.unpack_from(raw, 0)
        header = DexHeaderSchema(
            magic=magic,
            checksum=checksum,
            signature=signature,
            **dict(zip(HEADER_FIELDS, words)),
        )

        if header.header_size != HEADER_SIZE:
            raise BadHeaderSize(f"header_size is {header.header_size}, expected {HEADER_SIZE}")
        if header.endian_tag != ENDIAN_CONSTANT:
            raise UnsupportedEndian(f"endian tag {header.endian_tag:#010x} is not little-endian")
        if header.file_size > len(raw):
            raise OutOfBounds(
                f"declared file_size {header.file_size} exceeds stream length {len(raw)}"
            )

        DexServices._check_bounds(header)
        DexServices._check_overlap(DexServices.index_spans(header))
        return header

    @staticmethod
    def _check_bounds(header: DexHeaderSchema) -> None:
        extents = {
            "link": (header.link_off, header.link_size),
            "data": (header.data_off, header.data_size),
        }
        for section in IndexSectionEnum:
            size, offset = header.section(section)
            extents[section.value] = (offset, size * section.entry_width)

        for name, (offset, extent) in extents.items():
            if offset + extent > header.file_size:
                raise OutOfBounds(
                    f"{name} section [{offset}, {offset + extent}) exceeds file_size {header.file_size}"
                )
        if header.map_off and header.map_off >= header.file_size:
            raise OutOfBounds(f"map_off {header.map_off} outside file_size {header.file_size}")

    @staticmethod
    def _check_overlap(spans: List[IndexSpanSchema]) -> None:
        occupied = [span for span in spans if span.length > 0]
        for previous, current in zip(occupied, occupied[1:]):
            if current.offset < previous.end:
                raise Overlap(
                    f"{previous.section.value} and {current.section.value} index sections overlap"
                )
        for span in occupied:
            if span.offset < HEADER_SIZE:
                raise Overlap(f"{span.section.value} overlaps the header")

    @staticmethod
    def index_spans(header: DexHeaderSchema) -> List[IndexSpanSchema]:
        """
        Compute the six index-section spans, ordered by file offset.

        Args:
            header (DexHeaderSchema): A validated header.

        Returns:
            List[IndexSpanSchema]: One span per index section.
        """
        spans = []
        for section in IndexSectionEnum:
            size, offset = header.section(section)
            spans.append(
                IndexSpanSchema(section=section, offset=offset, length=size * section.entry_width)
            )
        return sorted(spans, key=lambda span: span.offset)

    @staticmethod
    def extract_index_bytes(raw: bytes, header: DexHeaderSchema) -> IndexBytesSchema:
        """
        Concatenate the index sections in file-offset order. Header and data
        sections are not part of the result.

        Args:
            raw (bytes): The DEX byte stream the header was parsed from.
            header (DexHeaderSchema): Its parsed header.

        Returns:
            IndexBytesSchema: The index bytes with span provenance.
        """
        spans = DexServices.index_spans(header)
        chunks = []
        for span in spans:
            if span.end > len(raw):
                raise OutOfBounds(
                    f"{span.section.value} span ends at {span.end}, stream has {len(raw)} bytes"
                )
            chunks.append(raw[span.offset : span.end])
        return IndexBytesSchema(data=b"".join(chunks), spans=spans)

    @staticmethod
    def verify_integrity(raw: bytes, header: DexHeaderSchema) -> None:
        """
        Check the Adler-32 checksum and SHA-1 signature recorded in the header.

        Args:
            raw (bytes): The DEX byte stream.
            header (DexHeaderSchema): Its parsed header.

        Raises:
            ChecksumMismatch: either value disagrees with the content.
        """
        body = raw[: header.file_size]
        checksum = zlib.adler32(body[12:]) & 0xFFFFFFFF
        if checksum != header.checksum:
            raise ChecksumMismatch(
                f"checksum {header.checksum:#010x} != computed {checksum:#010x}"
            )
        if hashlib.sha1(body[32:]).digest() != header.signature:
            raise ChecksumMismatch("SHA-1 signature does not match file content")
