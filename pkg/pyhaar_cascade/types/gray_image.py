from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(eq=False)
class GrayImage:
    """
    An 8-bit grayscale image.

    Attributes:
    - width: Number of columns.
    - height: Number of rows.
    - pixels: A (height, width) uint8 array, row-major; element [y, x] is the
      intensity at column x, row y.
    """
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"Image dimensions must be positive, got {self.width}x{self.height}")

        pixels = np.asarray(self.pixels)
        if pixels.size != self.width * self.height:
            raise ValueError(
                f"Pixel count {pixels.size} does not match {self.width}x{self.height}")
        if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
            raise ValueError("Pixel intensities must lie in [0, 255]")

        pixels = pixels.astype(np.uint8).reshape(self.height, self.width)
        pixels.setflags(write=False)
        self.pixels = pixels

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.pixels, other.pixels))

    def pixel(self, x: int, y: int) -> int:
        return int(self.pixels[y, x])

    def to_bytes(self) -> bytes:
        """Row-major raw payload, one byte per pixel."""
        return self.pixels.tobytes()

    @staticmethod
    def from_array(array: np.ndarray) -> 'GrayImage':
        """
        Wraps a 2-D array of intensities.

        :param array: A (height, width) array with values in [0, 255].
        """
        array = np.asarray(array)
        if array.ndim != 2:
            raise ValueError(f"Expected a 2-D array, got shape {array.shape}")
        height, width = array.shape
        return GrayImage(width, height, array)

    @staticmethod
    def from_sequence(width: int, height: int, values: Sequence[int]) -> 'GrayImage':
        return GrayImage(width, height, np.asarray(list(values), dtype=np.int64))

    @staticmethod
    def filled(width: int, height: int, value: int) -> 'GrayImage':
        return GrayImage(width, height, np.full((height, width), value, dtype=np.uint8))
