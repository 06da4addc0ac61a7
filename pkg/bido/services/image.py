from io import BytesIO
from pathlib import Path

import numpy as np
import torch
import torchvision.transforms as transforms
from PIL import Image, PngImagePlugin, UnidentifiedImageError

from bido.models.enums import ImageFormatEnum, InputKindEnum
from bido.schemas.image import ImageGeometrySchema, RgbImageSchema
from bido.services.dex import DexServices
from bido.utils.errors import EncodeFailure, IoFailure, MalformedContainer
from bido.utils.logger import get_logger

logger = get_logger(__name__)

TRUNCATED_KEY = "bido-truncated"


class ImageServices:
    """
    Packs byte streams into RGB images and moves them in and out of image
    containers.
    """

    transform = transforms.Compose(
        [
            transforms.ToTensor(),
            transforms.Normalize(mean=[0.5, 0.5, 0.5], std=[0.5, 0.5, 0.5]),
        ]
    )

    @staticmethod
    def pack_rgb(data: bytes, geometry: ImageGeometrySchema) -> RgbImageSchema:
        """
        Pack consecutive byte triplets into row-major RGB pixels.

        Pixel (i, j) takes bytes 3*idx, 3*idx+1, 3*idx+2 with idx = i*width + j.
        Missing bytes are zero; bytes past capacity are dropped and the image is
        flagged as truncated.

        Args:
            data (bytes): The source bytes.
            geometry (ImageGeometrySchema): Target width and height.

        Returns:
            RgbImageSchema: The packed image.
        """
        capacity = geometry.capacity
        buffer = np.zeros(capacity, dtype=np.uint8)
        used = min(len(data), capacity)
        buffer[:used] = np.frombuffer(data, dtype=np.uint8, count=used)
        return RgbImageSchema(
            geometry=geometry,
            pixels=buffer.tobytes(),
            truncated=len(data) > capacity,
        )

    @staticmethod
    def xml_to_image(xml_bytes: bytes, geometry: ImageGeometrySchema) -> RgbImageSchema:
        """
        Image a manifest by packing its raw byte stream, binary or text alike.

        Args:
            xml_bytes (bytes): The entire manifest file.
            geometry (ImageGeometrySchema): Target width and height.

        Returns:
            RgbImageSchema: The XML image.
        """
        return ImageServices.pack_rgb(xml_bytes, geometry)

    @staticmethod
    def dex_to_image(
        raw: bytes, geometry: ImageGeometrySchema, strict: bool = False
    ) -> RgbImageSchema:
        """
        Parse a DEX stream and image its index sections.

        Args:
            raw (bytes): The DEX byte stream.
            geometry (ImageGeometrySchema): Target width and height.
            strict (bool): Verify checksum and signature first.

        Returns:
            RgbImageSchema: The DEX image.
        """
        header = DexServices.parse_header(raw)
        if strict:
            DexServices.verify_integrity(raw, header)
        index_bytes = DexServices.extract_index_bytes(raw, header)
        return ImageServices.pack_rgb(index_bytes.data, geometry)

    @staticmethod
    def encode_image(
        image: RgbImageSchema, image_format: ImageFormatEnum = ImageFormatEnum.PNG
    ) -> bytes:
        """
        Serialize an image. PNG is lossless and keeps the truncation flag;
        JPEG is lossy.

        Args:
            image (RgbImageSchema): The image to encode.
            image_format (ImageFormatEnum): Container format.

        Returns:
            bytes: The container bytes.
        """
        geometry = image.geometry
        try:
            pil_image = Image.frombytes("RGB", (geometry.width, geometry.height), image.pixels)
            stream = BytesIO()
            if image_format is ImageFormatEnum.PNG:
                info = PngImagePlugin.PngInfo()
                info.add_text(TRUNCATED_KEY, "1" if image.truncated else "0")
                pil_image.save(stream, format="PNG", pnginfo=info)
            else:
                pil_image.save(stream, format="JPEG", quality=95)
        except (OSError, ValueError, MemoryError) as exc:
            raise EncodeFailure(f"failed to encode {geometry.width}x{geometry.height} image: {exc}")
        return stream.getvalue()

    @staticmethod
    def decode_image(data: bytes) -> RgbImageSchema:
        """
        Decode container bytes back into an image.

        Args:
            data (bytes): PNG (or JPEG) bytes.

        Returns:
            RgbImageSchema: The decoded image.
        """
        try:
            pil_image = Image.open(BytesIO(data))
            pil_image.load()
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            raise MalformedContainer(f"not a readable image container: {exc}")
        if pil_image.mode != "RGB":
            raise MalformedContainer(f"expected an RGB image, got mode {pil_image.mode}")

        truncated = getattr(pil_image, "text", {}).get(TRUNCATED_KEY) == "1"
        width, height = pil_image.size
        return RgbImageSchema(
            geometry=ImageGeometrySchema(width=width, height=height),
            pixels=pil_image.tobytes(),
            truncated=truncated,
        )

    @staticmethod
    def to_tensor(image: RgbImageSchema) -> torch.Tensor:
        """
        Convert an image to a 3 x H x W float64 tensor standardized to [-1, 1];
        a zero byte maps to -1.

        Args:
            image (RgbImageSchema): The image.

        Returns:
            torch.Tensor: The model input.
        """
        return ImageServices.transform(image.to_array().copy()).to(torch.float64)

    @staticmethod
    def convert_file(
        source: Path,
        target: Path,
        kind: InputKindEnum,
        geometry: ImageGeometrySchema,
        image_format: ImageFormatEnum = ImageFormatEnum.PNG,
        strict: bool = False,
    ) -> RgbImageSchema:
        """
        Read a DEX or XML file, image it and write the encoded image.

        Args:
            source (Path): Input file.
            target (Path): Image file to write.
            kind (InputKindEnum): How to read the input.
            geometry (ImageGeometrySchema): Target width and height.
            image_format (ImageFormatEnum): Container format.
            strict (bool): Verify DEX checksum and signature.

        Returns:
            RgbImageSchema: The written image.
        """
        try:
            raw = Path(source).read_bytes()
        except OSError as exc:
            raise IoFailure(f"cannot read {source}: {exc}")

        if kind is InputKindEnum.DEX:
            image = ImageServices.dex_to_image(raw, geometry, strict=strict)
        else:
            image = ImageServices.xml_to_image(raw, geometry)
        if image.truncated:
            logger.warning(f"{source} exceeds {geometry.capacity} bytes; image truncated")

        try:
            Path(target).write_bytes(ImageServices.encode_image(image, image_format))
        except OSError as exc:
            raise IoFailure(f"cannot write {target}: {exc}")
        return image
