"""
Image codec: 8-bit image files to (C, H, W) uint8 arrays, and the linear map between 8-bit pixels and
the model range [-1, 1].
"""

import threading
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from healthy_translate.errors import DatasetError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
DEFAULT_MAX_CACHED_IMAGES = 50_000


def normalize(pixels: np.ndarray) -> np.ndarray:
    """Map pixels in [0, 255] linearly to [-1, 1]: 0 -> -1, 127.5 -> 0, 255 -> 1."""
    pixels = np.asarray(pixels)
    if pixels.dtype == np.bool_ or not (
        np.issubdtype(pixels.dtype, np.integer) or np.issubdtype(pixels.dtype, np.floating)
    ):
        raise ValueError(f"Expected an integer or float pixel array, got {pixels.dtype}")
    values = pixels.astype(np.float64)
    if values.size and (
        not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 255.0
    ):
        raise ValueError(
            f"Pixel values must be finite and within [0, 255], got range [{values.min()}, {values.max()}]"
        )
    return (values / 127.5 - 1.0).astype(np.float32)


def denormalize(values: np.ndarray) -> np.ndarray:
    """Inverse of `normalize`, rounded to the nearest 8-bit value."""
    values = np.asarray(values, dtype=np.float64)
    if values.size and not np.all(np.isfinite(values)):
        raise ValueError("Cannot denormalize non-finite values")
    pixels = np.rint((np.clip(values, -1.0, 1.0) + 1.0) * 127.5)
    return pixels.astype(np.uint8)


def decode_image(path: Path, channels: int) -> np.ndarray:
    """Decode an image file to a (channels, H, W) uint8 array.

    Three channel models read RGB; any other channel count reads grayscale and replicates it.
    """
    try:
        with Image.open(path) as image:
            if channels == 3:
                array = np.asarray(image.convert("RGB"), dtype=np.uint8).transpose(2, 0, 1)
            else:
                gray = np.asarray(image.convert("L"), dtype=np.uint8)
                array = np.repeat(gray[None, :, :], channels, axis=0)
    except FileNotFoundError as e:
        raise DatasetError(f"Image file not found: {path}") from e
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DatasetError(f"Cannot decode image {path}: {e}") from e
    return np.ascontiguousarray(array)


def read_mask(path: Path) -> np.ndarray:
    """Read a ground truth mask PNG as a boolean (H, W) array. Nonzero pixels are lesion."""
    return decode_image(path, channels=1)[0] > 0


def write_png(path: Path, pixels: np.ndarray) -> None:
    """Write a (H, W), (1, H, W) or (3, H, W) uint8 array as an 8-bit PNG."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise ValueError(f"Expected uint8 pixels, got {pixels.dtype}")
    if pixels.ndim == 3:
        if pixels.shape[0] == 3:
            image = Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)), "RGB")
        else:
            image = Image.fromarray(np.ascontiguousarray(pixels[0]), "L")
    elif pixels.ndim == 2:
        image = Image.fromarray(np.ascontiguousarray(pixels), "L")
    else:
        raise ValueError(f"Expected a 2D or 3D pixel array, got shape {pixels.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format="PNG")


def load_image(
    path: Path, channels: int, image_size: Optional[int] = None
) -> np.ndarray:
    """Decode and check the size of an image. Returns (channels, H, W) uint8."""
    pixels = decode_image(path, channels)
    if image_size is not None and pixels.shape[1:] != (image_size, image_size):
        raise DatasetError(
            f"Image {path} is {pixels.shape[2]}x{pixels.shape[1]} but the model expects {image_size}x{image_size}"
        )
    return pixels


class ImageCache:
    """
    Decoded image cache keyed by path and channel count, invalidated by file mtime.

    Training draws the same files over and over; decoding dominates batch loading for small images.
    Cached arrays are read-only, callers copy before mutating. Once `max_items` entries are held,
    further images are decoded without being cached. Pickling (for loader worker processes) drops
    the cached arrays.
    """

    def __init__(self, max_items: Optional[int] = DEFAULT_MAX_CACHED_IMAGES):
        self.max_items = max_items
        self._cache: Dict[Tuple[Path, int], Tuple[np.ndarray, int]] = {}
        self._lock = threading.Lock()

    def __getstate__(self) -> Dict[str, Any]:
        return {"max_items": self.max_items}

    def __setstate__(self, state: Dict[str, Any]) -> None:
        self.__init__(state["max_items"])

    def get(
        self, path: Path, channels: int, image_size: Optional[int] = None
    ) -> np.ndarray:
        key = (path, channels)
        try:
            mtime_ns = path.stat().st_mtime_ns
        except OSError as e:
            raise DatasetError(f"Image file not found: {path}") from e
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None and cached[1] == mtime_ns:
            pixels = cached[0]
        else:
            pixels = decode_image(path, channels)
            pixels.setflags(write=False)
            with self._lock:
                room = self.max_items is None or len(self._cache) < self.max_items
                if room or key in self._cache:
                    self._cache[key] = (pixels, mtime_ns)
        if image_size is not None and pixels.shape[1:] != (image_size, image_size):
            raise DatasetError(
                f"Image {path} is {pixels.shape[2]}x{pixels.shape[1]} but the model expects {image_size}x{image_size}"
            )
        return pixels

    def invalidate(self, path: Path):
        with self._lock:
            for key in [k for k in self._cache if k[0] == path]:
                del self._cache[key]

    def clear(self):
        with self._lock:
            self._cache.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._cache)
