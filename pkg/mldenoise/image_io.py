"""
Image file reading and writing for mldenoise.

Supported formats, chosen by file extension:
  - .pgm  PGM (binary P5 or plain P2), 8 or 16 bit (via Pillow)
  - .png  grayscale PNG, 8 or 16 bit (via Pillow)
  - .npy  raw float64 arrays, lossless and unbounded

PGM and PNG intensities are scaled to [0, 1] on read and quantized to 16 bit
on write. Use .npy for fields that leave [0, 1] (speckled envelopes,
log-compressed images).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from mldenoise.exceptions import ImageFormatError
from mldenoise.image import Image

logger = logging.getLogger(__name__)

QUANT_LEVELS = 65535

# Pillow modes that carry a single gray channel, with their full-scale value.
# Pillow rescales PGM rasters whose maxval is not 255 or 65535 to these.
_GRAY_MODES = {
    "1": 1.0,
    "L": 255.0,
    "I;16": 65535.0,
    "I;16B": 65535.0,
    "I;16L": 65535.0,
    "I": 65535.0,
}

# Pillow format name expected for each raster extension
_PIL_FORMATS = {".pgm": "PPM", ".png": "PNG"}

SUPPORTED_EXTENSIONS = (".pgm", ".png", ".npy")


def _extension(path: Path) -> str:
    ext = path.suffix.lower()
    if ext not in SUPPORTED_EXTENSIONS:
        raise ImageFormatError(
            f"Unsupported image format '{path.suffix}' for {path} "
            f"(expected one of {', '.join(SUPPORTED_EXTENSIONS)})"
        )
    return ext


def _read_raster(path: Path, ext: str) -> np.ndarray:
    expected = _PIL_FORMATS[ext]
    label = ext[1:].upper()
    try:
        with PILImage.open(path) as im:
            if im.format != expected:
                raise ImageFormatError(f"{path}: not a {label} file (found {im.format})")
            mode = im.mode
            if mode not in _GRAY_MODES:
                raise ImageFormatError(
                    f"{path}: only grayscale images are supported, not color mode {mode}"
                )
            arr = np.asarray(im, dtype=np.float64)
    except OSError as e:
        raise ImageFormatError(f"{path}: cannot decode {label} (truncated or corrupt): {e}") from e
    if arr.ndim != 2:
        raise ImageFormatError(f"{path}: expected a single-channel image")
    return arr / _GRAY_MODES[mode]


def read_image(path: Path | str) -> Image:
    """Read a grayscale image file.

    Args:
        path: Path to a .pgm, .png or .npy file

    Returns:
        Image with intensities in [0, 1] (PGM/PNG) or as stored (.npy)

    Raises:
        FileNotFoundError: If the file doesn't exist
        ImageFormatError: If the format is unsupported, malformed or colour
    """
    path = Path(path)
    ext = _extension(path)
    if not path.exists():
        raise FileNotFoundError(f"Image file not found: {path}")

    if ext in _PIL_FORMATS:
        return Image(_read_raster(path, ext))

    try:
        arr = np.load(path, allow_pickle=False)
    except ValueError as e:
        raise ImageFormatError(f"{path}: not a numpy array file: {e}") from e
    if arr.ndim != 2:
        raise ImageFormatError(f"{path}: expected a 2D array, got shape {arr.shape}")
    return Image(arr)


def quantize(img: Image) -> np.ndarray:
    """Quantize [0, 1] intensities to 16-bit integers, clipping out-of-range values."""
    data = img.data
    lo, hi = float(data.min()), float(data.max())
    if lo < 0.0 or hi > 1.0:
        logger.warning(
            "Clipping intensities in [%.4g, %.4g] to [0, 1] for 16-bit output", lo, hi
        )
    return np.round(np.clip(data, 0.0, 1.0) * QUANT_LEVELS).astype(np.uint16)


def write_image(img: Image, path: Path | str) -> None:
    """Write an image, choosing the format from the extension.

    PGM (binary P5, maxval 65535) and PNG outputs are 16-bit; .npy stores
    float64 exactly.

    Raises:
        ImageFormatError: If the extension is unsupported
    """
    path = Path(path)
    ext = _extension(path)

    if ext == ".npy":
        with open(path, "wb") as f:
            np.save(f, np.asarray(img.data, dtype=np.float64), allow_pickle=False)
        return

    q = quantize(img)
    if ext == ".pgm":
        # Mode "I" is written by Pillow as big-endian 16-bit P5.
        PILImage.fromarray(q.astype(np.int32)).save(path, format="PPM")
        return
    PILImage.fromarray(q).save(path, format="PNG")
