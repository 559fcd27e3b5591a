import logging
import math
import os
import re
from typing import List

import numpy as np

from ..types.gray_image import GrayImage
from ..types.integral_image import IntegralImage
from ..types.rect import Rect

logger = logging.getLogger(__name__)

FRAME_PATTERN = re.compile(r"^frame_(\d+)\.pgm$")


class PgmFormatError(Exception):
    """Exception raised when a PGM file cannot be decoded."""

    def __init__(self, path=None, field=None, message="Malformed PGM file"):
        self.path = path
        self.field = field
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


class UnsupportedFormatError(PgmFormatError):
    """Exception raised for PNM variants other than binary 8-bit P5."""

    def __init__(self, path=None, field=None, message="Unsupported image format"):
        super().__init__(path, field, message)


class RectOutOfBounds(Exception):
    """Exception raised when a rectangle does not lie inside the image."""

    def __init__(self, rect=None, width=None, height=None, message=None):
        self.rect = rect
        self.width = width
        self.height = height
        self.message = message or f"Rectangle {rect} is outside a {width}x{height} image"
        super().__init__(self.message)

    def __str__(self):
        return self.message


def _next_token(data: bytes, pos: int, path: str, field: str):
    """
    Reads one whitespace-delimited header token, skipping `#` comments.

    Returns the token and the position just after it.
    """
    size = len(data)
    while pos < size:
        char = data[pos:pos + 1]
        if char == b"#":
            while pos < size and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif char.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < size and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmFormatError(path, field, f"{path}: missing {field} in PGM header")
    return data[start:pos], pos


def _parse_header_int(token: bytes, path: str, field: str) -> int:
    if not token.isdigit():
        raise PgmFormatError(path, field, f"{path}: {field} is not a positive integer: {token!r}")
    value = int(token)
    if value <= 0:
        raise PgmFormatError(path, field, f"{path}: {field} must be positive, got {value}")
    return value


def _load_pgm(path: str) -> GrayImage:
    """
    Reads a binary (P5) 8-bit PGM file.

    Args:
        path (str): File to read.

    Returns:
        GrayImage: The decoded image, pixel values exactly as stored.

    Raises:
        UnsupportedFormatError: For any magic other than P5, or maxval above 255.
        PgmFormatError: For malformed headers or a truncated payload; `field` names the culprit.
    """
    with open(path, "rb") as handle:
        data = handle.read()

    magic, pos = _next_token(data, 0, path, "magic")
    if magic != b"P5":
        raise UnsupportedFormatError(path, "magic", f"{path}: unsupported magic {magic!r}, only binary P5 is read")

    token, pos = _next_token(data, pos, path, "width")
    width = _parse_header_int(token, path, "width")
    token, pos = _next_token(data, pos, path, "height")
    height = _parse_header_int(token, path, "height")
    token, pos = _next_token(data, pos, path, "maxval")
    maxval = _parse_header_int(token, path, "maxval")
    if maxval > 255:
        raise UnsupportedFormatError(path, "maxval", f"{path}: maxval {maxval} is not supported (must be <= 255)")

    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PgmFormatError(path, "maxval", f"{path}: header does not end with whitespace")
    pos += 1

    expected = width * height
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise PgmFormatError(path, "payload", f"{path}: payload truncated, expected {expected} bytes, got {len(payload)}")

    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    if int(pixels.max()) > maxval:
        raise PgmFormatError(path, "payload", f"{path}: pixel value exceeds maxval {maxval}")
    return GrayImage(width, height, pixels)


def _save_pgm(image: GrayImage, path: str) -> None:
    """
    Writes an image as binary P5 with maxval 255.

    The header is exactly "P5\\n<w> <h>\\n255\\n", followed by the rows top to bottom.
    """
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(image.to_bytes())


def _integral(image: GrayImage) -> IntegralImage:
    """
    Builds the plain and squared summed-area tables in one pass over the pixels.

    Args:
        image (GrayImage): Source image.

    Returns:
        IntegralImage: cells[y, x] = sum of i(x', y') for x' <= x, y' <= y, and the
        same for squared intensities.
    """
    values = image.pixels.astype(np.int64)
    cells = values.cumsum(axis=0).cumsum(axis=1)
    squared_cells = (values * values).cumsum(axis=0).cumsum(axis=1)
    return IntegralImage(image.width, image.height, cells, squared_cells)


def _check_rect(ii: IntegralImage, r: Rect):
    if not r.fits(ii.width, ii.height):
        raise RectOutOfBounds(r, ii.width, ii.height)


def _rect_sum(ii: IntegralImage, r: Rect) -> int:
    """
    Sum of intensities inside a rectangle, from exactly four integral reads.

    Raises:
        RectOutOfBounds: If the rectangle is not inside the image.
    """
    _check_rect(ii, r)
    x1 = r.x + r.w - 1
    y1 = r.y + r.h - 1
    return ii.cell(x1, y1) - ii.cell(x1, r.y - 1) - ii.cell(r.x - 1, y1) + ii.cell(r.x - 1, r.y - 1)


def _rect_squared_sum(ii: IntegralImage, r: Rect) -> int:
    _check_rect(ii, r)
    x1 = r.x + r.w - 1
    y1 = r.y + r.h - 1
    return (ii.squared_cell(x1, y1) - ii.squared_cell(x1, r.y - 1)
            - ii.squared_cell(r.x - 1, y1) + ii.squared_cell(r.x - 1, r.y - 1))


def _rect_mean(ii: IntegralImage, r: Rect) -> float:
    """
    Mean intensity of a rectangle: rect_sum / (w * h).
    """
    return float(_rect_sum(ii, r)) / float(r.area)


def _std_from_sums(area: int, total: int, squared_total: int) -> float:
    # float(numerator) / float(area^2) mirrors the vectorized path bit for bit
    numerator = area * squared_total - total * total
    return math.sqrt(float(numerator) / float(area * area))


def _window_std(ii: IntegralImage, r: Rect) -> float:
    """
    Standard deviation of the intensities inside a rectangle, from both integral channels.
    """
    return _std_from_sums(r.area, _rect_sum(ii, r), _rect_squared_sum(ii, r))


def _crop(image: GrayImage, r: Rect) -> GrayImage:
    if not r.fits(image.width, image.height):
        raise RectOutOfBounds(r, image.width, image.height)
    return GrayImage.from_array(image.pixels[r.y:r.bottom, r.x:r.right])


def _resample(image: GrayImage, r: Rect, side: int) -> GrayImage:
    """
    Resamples a rectangle of the image to a side x side crop, nearest pixel centre.
    """
    if not r.fits(image.width, image.height):
        raise RectOutOfBounds(r, image.width, image.height)
    cols = r.x + np.floor((np.arange(side) + 0.5) * r.w / side).astype(np.int64)
    rows = r.y + np.floor((np.arange(side) + 0.5) * r.h / side).astype(np.int64)
    return GrayImage.from_array(image.pixels[np.ix_(rows, cols)])


def _draw_rect(image: GrayImage, r: Rect, intensity: int = 255) -> GrayImage:
    """
    Returns a copy of the image with a 1-pixel rectangle outline burned in.
    """
    if not r.fits(image.width, image.height):
        raise RectOutOfBounds(r, image.width, image.height)
    pixels = image.pixels.copy()
    pixels[r.y, r.x:r.right] = intensity
    pixels[r.bottom - 1, r.x:r.right] = intensity
    pixels[r.y:r.bottom, r.x] = intensity
    pixels[r.y:r.bottom, r.right - 1] = intensity
    return GrayImage.from_array(pixels)


def _frame_name(index: int) -> str:
    return f"frame_{index:06d}.pgm"


def _load_frames(directory: str) -> List[GrayImage]:
    """
    Loads a numbered frame sequence (frame_000001.pgm, ...) in frame order.

    Files not matching the naming pattern are ignored.
    """
    names = [name for name in os.listdir(directory) if FRAME_PATTERN.match(name)]
    names.sort(key=lambda name: int(FRAME_PATTERN.match(name).group(1)))
    logger.debug("Loading %d frames from %s", len(names), directory)
    return [_load_pgm(os.path.join(directory, name)) for name in names]


def _save_frames(frames: List[GrayImage], directory: str) -> List[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for index, frame in enumerate(frames, start=1):
        path = os.path.join(directory, _frame_name(index))
        _save_pgm(frame, path)
        paths.append(path)
    return paths
