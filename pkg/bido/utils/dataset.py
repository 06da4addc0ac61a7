from pathlib import Path
from typing import List, Sequence, Tuple, Union

import torch
from torch.utils.data import Dataset

from bido.schemas.corpus import CorpusManifestSchema, SamplePairSchema
from bido.schemas.image import ImageGeometrySchema, RgbImageSchema
from bido.services.image import ImageServices

ImageSource = Union[RgbImageSchema, Path]


class CorpusDataset(Dataset):
    """
    Labeled (DEX image, XML image) pairs as model-ready tensors.

    Items are either in-memory images or image files on disk; files are decoded
    lazily on access.
    """

    def __init__(self, items: Sequence[Tuple[ImageSource, ImageSource, int]]):
        self.items = list(items)

    @classmethod
    def from_pairs(
        cls,
        pairs: Sequence[SamplePairSchema],
        dex_geometry: ImageGeometrySchema,
        xml_geometry: ImageGeometrySchema,
    ) -> "CorpusDataset":
        return cls(
            [
                (
                    ImageServices.dex_to_image(pair.dex, dex_geometry),
                    ImageServices.xml_to_image(pair.xml, xml_geometry),
                    int(pair.label),
                )
                for pair in pairs
            ]
        )

    @classmethod
    def from_manifest(cls, manifest: CorpusManifestSchema) -> "CorpusDataset":
        root = Path(manifest.root)
        return cls(
            [
                (root / record.dex_image_path, root / record.xml_image_path, int(record.label))
                for record in manifest.records
            ]
        )

    @property
    def labels(self) -> List[int]:
        return [label for _, _, label in self.items]

    def __len__(self):
        return len(self.items)

    def __getitem__(self, idx):
        dex, xml, label = self.items[idx]
        return _load(dex), _load(xml), label


def _load(source: ImageSource) -> torch.Tensor:
    if isinstance(source, Path):
        source = ImageServices.decode_image(source.read_bytes())
    return ImageServices.to_tensor(source)
