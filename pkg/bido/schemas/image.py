from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ImageGeometrySchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)

    @property
    def capacity(self) -> int:
        """Number of source bytes the image can hold (three per pixel)."""
        return 3 * self.width * self.height


class RgbImageSchema(BaseModel):
    """Row-major RGB pixel grid; `pixels` holds r,g,b bytes per pixel."""

    model_config = ConfigDict(frozen=True)

    geometry: ImageGeometrySchema
    pixels: bytes
    truncated: bool = False

    @model_validator(mode="after")
    def check_pixel_count(self):
        if len(self.pixels) != self.geometry.capacity:
            raise ValueError(
                f"expected {self.geometry.capacity} channel bytes, got {len(self.pixels)}"
            )
        return self

    def to_array(self) -> np.ndarray:
        """Return the pixels as a height x width x 3 uint8 array."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(
            self.geometry.height, self.geometry.width, 3
        )

    def pixel(self, row: int, col: int) -> Tuple[int, int, int]:
        idx = 3 * (row * self.geometry.width + col)
        r, g, b = self.pixels[idx : idx + 3]
        return r, g, b
