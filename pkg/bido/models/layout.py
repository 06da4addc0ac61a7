"""Mutable DEX layout used to build and rewrite synthetic files.

A layout holds the six index sections, the data body (without the map list)
and the gap before each occupied region. `assemble` lays the regions out in
schema order, relocates data pointers when the data body moves, appends a fresh
map list and re-synthesizes the header, checksum and signature.
"""

import hashlib
import struct
import zlib
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from bido.models.enums import IndexSectionEnum
from bido.schemas.dex import ENDIAN_CONSTANT, HEADER_SIZE
from bido.services.dex import HEADER_STRUCT, DexServices
from bido.utils.errors import SpecOverflow

DEX_MAGIC = b"dex\n035\x00"
DATA_REGION = "data"

# u32 fields per entry that hold file offsets into the data section
DATA_POINTERS: Dict[IndexSectionEnum, Tuple[int, ...]] = {
    IndexSectionEnum.STRING_IDS: (0,),
    IndexSectionEnum.CLASS_DEFS: (3, 5, 6, 7),
}

MAP_ITEM_TYPES = {
    IndexSectionEnum.STRING_IDS: 0x0001,
    IndexSectionEnum.TYPE_IDS: 0x0002,
    IndexSectionEnum.PROTO_IDS: 0x0003,
    IndexSectionEnum.FIELD_IDS: 0x0004,
    IndexSectionEnum.METHOD_IDS: 0x0005,
    IndexSectionEnum.CLASS_DEFS: 0x0006,
}
MAP_HEADER_ITEM = 0x0000
MAP_LIST_ITEM = 0x1000
MAP_ITEM = struct.Struct("<HHII")


def _empty_sections() -> Dict[IndexSectionEnum, bytearray]:
    return {section: bytearray() for section in IndexSectionEnum}


@dataclass
class DexLayout:
    sections: Dict[IndexSectionEnum, bytearray] = field(default_factory=_empty_sections)
    data: bytearray = field(default_factory=bytearray)
    data_origin: int = 0
    gaps: Dict[str, int] = field(default_factory=dict)
    magic: bytes = DEX_MAGIC

    def count(self, section: IndexSectionEnum) -> int:
        return len(self.sections[section]) // section.entry_width

    def entries(self, section: IndexSectionEnum) -> np.ndarray:
        """A writable (count, entry_width) uint8 view of a section."""
        return np.frombuffer(self.sections[section], dtype=np.uint8).reshape(
            -1, section.entry_width
        )

    def words(self, section: IndexSectionEnum) -> np.ndarray:
        """A writable (count, entry_width // 4) little-endian u32 view of a section."""
        return np.frombuffer(self.sections[section], dtype="<u4").reshape(
            -1, section.entry_width // 4
        )

    @classmethod
    def parse(cls, raw: bytes) -> "DexLayout":
        """
        Split a DEX stream into a layout.

        Args:
            raw (bytes): A DEX stream that passes parse_header.

        Returns:
            DexLayout: Its sections, data body and gaps.
        """
        header = DexServices.parse_header(raw)
        layout = cls(magic=header.magic)
        previous_end = HEADER_SIZE
        for section in IndexSectionEnum:
            size, offset = header.section(section)
            length = size * section.entry_width
            layout.sections[section] = bytearray(raw[offset : offset + length])
            if length:
                layout.gaps[section.value] = max(offset - previous_end, 0)
                previous_end = max(previous_end, offset + length)

        if header.data_size:
            end = header.data_off + header.data_size
            if header.data_off <= header.map_off < end:
                end = header.map_off
            layout.data = bytearray(raw[header.data_off : end])
            layout.data_origin = header.data_off
            layout.gaps[DATA_REGION] = max(header.data_off - previous_end, 0)
        return layout

    def _relocate(self, sections: Dict[IndexSectionEnum, bytearray], delta: int) -> None:
        low, high = self.data_origin, self.data_origin + len(self.data)
        for section, fields in DATA_POINTERS.items():
            if not sections[section]:
                continue
            words = np.frombuffer(sections[section], dtype="<u4").reshape(
                -1, section.entry_width // 4
            )
            for column in fields:
                values = words[:, column].astype(np.int64)
                inside = (values >= low) & (values < high)
                words[inside, column] = (values[inside] + delta).astype("<u4")

    def assemble(self) -> bytes:
        """
        Serialize the layout as a self-consistent DEX file.

        Returns:
            bytes: The DEX stream.
        """
        offsets: Dict[IndexSectionEnum, int] = {}
        cursor = HEADER_SIZE
        for section in IndexSectionEnum:
            body = self.sections[section]
            if len(body) % section.entry_width:
                raise SpecOverflow(f"{section.value} is not a whole number of entries")
            if body:
                cursor += self.gaps.get(section.value, 0)
                offsets[section] = cursor
                cursor += len(body)
            else:
                offsets[section] = 0

        sections = {section: bytearray(body) for section, body in self.sections.items()}
        has_content = bool(self.data) or any(sections.values())
        data_off = map_off = 0
        data_body = bytes(self.data)
        map_list = b""
        if has_content:
            cursor += self.gaps.get(DATA_REGION, 0)
            data_off = cursor
            if self.data and data_off != self.data_origin:
                self._relocate(sections, data_off - self.data_origin)
            data_body += b"\x00" * (-len(data_body) % 4)
            map_off = data_off + len(data_body)
            map_list = self._map_list(offsets, map_off)
        file_size = data_off + len(data_body) + len(map_list) if has_content else HEADER_SIZE
        if file_size >= 2**32:
            raise SpecOverflow(f"file size {file_size} exceeds the 32-bit limit")

        header_words = [
            file_size,
            HEADER_SIZE,
            ENDIAN_CONSTANT,
            0,
            0,
            map_off,
        ]
        for section in IndexSectionEnum:
            header_words.extend([self.count(section), offsets[section]])
        header_words.extend([file_size - data_off if has_content else 0, data_off])

        raw = bytearray(file_size)
        HEADER_STRUCT.pack_into(raw, 0, self.magic, 0, b"\x00" * 20, *header_words)
        for section in IndexSectionEnum:
            body = sections[section]
            raw[offsets[section] : offsets[section] + len(body)] = body
        if has_content:
            raw[data_off : data_off + len(data_body)] = data_body
            raw[map_off : map_off + len(map_list)] = map_list

        raw[12:32] = hashlib.sha1(raw[32:]).digest()
        raw[8:12] = struct.pack("<I", zlib.adler32(raw[12:]) & 0xFFFFFFFF)
        return bytes(raw)

    def _map_list(self, offsets: Dict[IndexSectionEnum, int], map_off: int) -> bytes:
        items = [(MAP_HEADER_ITEM, 1, 0)]
        for section in IndexSectionEnum:
            if self.sections[section]:
                items.append((MAP_ITEM_TYPES[section], self.count(section), offsets[section]))
        items.append((MAP_LIST_ITEM, 1, map_off))
        return struct.pack("<I", len(items)) + b"".join(
            MAP_ITEM.pack(kind, 0, size, offset) for kind, size, offset in items
        )
