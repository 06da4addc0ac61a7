import struct

import numpy as np
import pytest

from bido.models.enums import IndexSectionEnum, LabelEnum
from bido.models.layout import DexLayout
from bido.schemas.config import CorpusConfig
from bido.schemas.dex import ENDIAN_CONSTANT, HEADER_SIZE
from bido.services.corpus import CorpusServices
from bido.services.dex import HEADER_FIELDS, DexServices
from bido.utils.errors import (
    BadHeaderSize,
    BadMagic,
    ChecksumMismatch,
    OutOfBounds,
    Overlap,
    TooShort,
    UnsupportedEndian,
)


def _set_word(raw: bytes, field: str, value: int) -> bytes:
    offset = 32 + 4 * HEADER_FIELDS.index(field)
    patched = bytearray(raw)
    patched[offset : offset + 4] = struct.pack("<I", value)
    return bytes(patched)


def _layout_with(counts) -> DexLayout:
    layout = DexLayout()
    for section, count in counts.items():
        layout.sections[section] = bytearray(
            (np.arange(count * section.entry_width) % 251).astype(np.uint8).tobytes()
        )
    return layout


class TestParseHeader:
    def test_builder_fields_recovered(self, sample_spec, dex_bytes):
        header = DexServices.parse_header(dex_bytes)
        assert header.magic == b"dex\n035\x00"
        assert header.header_size == HEADER_SIZE
        assert header.endian_tag == ENDIAN_CONSTANT
        assert header.file_size == len(dex_bytes)
        for section in IndexSectionEnum:
            size, _ = header.section(section)
            assert size == getattr(sample_spec, section.value)

    def test_too_short(self):
        with pytest.raises(TooShort):
            DexServices.parse_header(b"dex\n035\x00" + b"\x00" * 50)

    def test_bad_magic(self, dex_bytes):
        with pytest.raises(BadMagic):
            DexServices.parse_header(b"PK\x03\x04" + dex_bytes[4:])

    def test_bad_header_size(self, dex_bytes):
        with pytest.raises(BadHeaderSize):
            DexServices.parse_header(_set_word(dex_bytes, "header_size", 0x70 + 4))

    def test_big_endian_tag_rejected(self, dex_bytes):
        with pytest.raises(UnsupportedEndian):
            DexServices.parse_header(_set_word(dex_bytes, "endian_tag", 0x78563412))

    def test_declared_size_beyond_stream(self, dex_bytes):
        with pytest.raises(OutOfBounds):
            DexServices.parse_header(dex_bytes[:-8])

    def test_section_beyond_file(self, dex_bytes):
        with pytest.raises(OutOfBounds):
            DexServices.parse_header(_set_word(dex_bytes, "method_ids_size", 0xFFFF))

    def test_overlapping_sections(self, dex_bytes):
        header = DexServices.parse_header(dex_bytes)
        with pytest.raises(Overlap):
            DexServices.parse_header(_set_word(dex_bytes, "type_ids_off", header.string_ids_off))

    def test_section_inside_header(self, dex_bytes):
        with pytest.raises(Overlap):
            DexServices.parse_header(_set_word(dex_bytes, "string_ids_off", 16))

    def test_header_only_file(self):
        raw = DexLayout().assemble()
        assert len(raw) == HEADER_SIZE
        header = DexServices.parse_header(raw)
        assert header.file_size == HEADER_SIZE
        assert DexServices.extract_index_bytes(raw, header).data == b""


class TestExtractIndexBytes:
    def test_sections_concatenated_in_offset_order(self):
        counts = {
            IndexSectionEnum.STRING_IDS: 3,
            IndexSectionEnum.TYPE_IDS: 2,
            IndexSectionEnum.PROTO_IDS: 1,
            IndexSectionEnum.FIELD_IDS: 2,
            IndexSectionEnum.METHOD_IDS: 4,
            IndexSectionEnum.CLASS_DEFS: 1,
        }
        layout = _layout_with(counts)
        raw = layout.assemble()
        extracted = DexServices.extract_index_bytes(raw, DexServices.parse_header(raw))
        assert extracted.data == b"".join(bytes(layout.sections[s]) for s in IndexSectionEnum)
        assert [span.section for span in extracted.spans] == list(IndexSectionEnum)
        assert len(extracted.data) == sum(
            count * section.entry_width for section, count in counts.items()
        )

    def test_empty_sections_contribute_nothing(self):
        layout = _layout_with({IndexSectionEnum.METHOD_IDS: 2})
        raw = layout.assemble()
        extracted = DexServices.extract_index_bytes(raw, DexServices.parse_header(raw))
        assert extracted.data == bytes(layout.sections[IndexSectionEnum.METHOD_IDS])

    def test_header_and_data_excluded(self, dex_bytes):
        header = DexServices.parse_header(dex_bytes)
        extracted = DexServices.extract_index_bytes(dex_bytes, header)
        assert extracted.data == dex_bytes[header.string_ids_off : header.data_off]

    def test_round_trip_thousand_builder_files(self):
        config = CorpusConfig(n=1000, seed=5)
        seeds = CorpusServices.sample_seeds(config.seed, config.n)
        labels = CorpusServices.corpus_labels(config.n, 0.5, config.seed)
        for label, seed in zip(labels, seeds):
            spec = CorpusServices.sample_spec(label, seed, config)
            raw = CorpusServices.build_synthetic_dex(spec)
            layout = DexLayout.parse(raw)
            header = DexServices.parse_header(raw)
            expected = b"".join(bytes(layout.sections[s]) for s in IndexSectionEnum)
            assert DexServices.extract_index_bytes(raw, header).data == expected
            assert header.method_ids_size == spec.method_ids


class TestVerifyIntegrity:
    def test_assembled_file_verifies(self, dex_bytes):
        DexServices.verify_integrity(dex_bytes, DexServices.parse_header(dex_bytes))

    def test_flipped_byte_detected(self, dex_bytes):
        tampered = bytearray(dex_bytes)
        tampered[-1] ^= 0xFF
        tampered = bytes(tampered)
        with pytest.raises(ChecksumMismatch):
            DexServices.verify_integrity(tampered, DexServices.parse_header(tampered))


class TestLayout:
    def test_parse_assemble_identity(self, dex_bytes):
        assert DexLayout.parse(dex_bytes).assemble() == dex_bytes

    def test_relocation_keeps_string_pointers_valid(self, dex_bytes):
        layout = DexLayout.parse(dex_bytes)
        layout.gaps["data"] = layout.gaps.get("data", 0) + 16
        moved = layout.assemble()
        before = DexServices.parse_header(dex_bytes)
        after = DexServices.parse_header(moved)
        assert after.data_off == before.data_off + 16

        def first_string(raw, header):
            (pointer,) = struct.unpack_from("<I", raw, header.string_ids_off)
            length = raw[pointer]
            return raw[pointer + 1 : pointer + 1 + length]

        assert first_string(moved, after) == first_string(dex_bytes, before)

    def test_labels_do_not_change_structure(self, corpus_config):
        benign = CorpusServices.sample_spec(LabelEnum.BENIGN, 4, corpus_config)
        raw = CorpusServices.build_synthetic_dex(benign)
        DexServices.verify_integrity(raw, DexServices.parse_header(raw))
