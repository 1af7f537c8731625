"""HDR/LDR image value types, PFM and PNG file I/O, and gamma conversion.

Images are held as ``(height, width, 3)`` numpy arrays. PFM files store
rows bottom-up; everything in memory is top-down.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

DEFAULT_GAMMA = 2.2

# Mask label values; the PNG encoding puts each class in its own colour channel.
OBJECT, AREA_LIGHT, ENVIRONMENT = 0, 1, 2
MASK_CLASSES = ("object", "area-light", "environment")


class ImageFormatError(ValueError):
    """Raised for malformed, truncated or invalid image files."""


def _as_rgb(data, name):
    arr = np.asarray(data)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} data must have shape (height, width, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive height and width")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


@dataclass(frozen=True, eq=False)
class HdrImage:
    """Linear RGB radiance, finite and non-negative."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_rgb(self.data, "HdrImage")
        if not np.all(np.isfinite(arr)):
            raise ValueError("HdrImage contains a non-finite sample")
        if np.any(arr < 0):
            raise ValueError("HdrImage contains a negative sample")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width, 3), dtype=np.float32))


@dataclass(frozen=True, eq=False)
class LdrImage:
    """Gamma-encoded RGB with every component in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_rgb(self.data, "LdrImage")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("LdrImage components must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class MaskImage:
    """Per-pixel segmentation into object / area-light / environment.

    ``labels`` holds one of ``OBJECT``, ``AREA_LIGHT``, ``ENVIRONMENT`` per
    pixel; :attr:`channels` is the equivalent one-hot ``(h, w, 3)`` view.
    """

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.shape[0] < 1 or lab.shape[1] < 1:
            raise ValueError(f"mask labels must be a non-empty 2-D array, got {lab.shape}")
        if not np.all(np.isin(lab, (OBJECT, AREA_LIGHT, ENVIRONMENT))):
            raise ValueError("mask labels must be 0 (object), 1 (area light) or 2 (environment)")
        lab = lab.astype(np.int8)
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def channels(self) -> np.ndarray:
        return (self.labels[..., None] == np.arange(3)).astype(np.uint8)

    @property
    def object(self) -> np.ndarray:
        return self.labels == OBJECT

    @property
    def area_light(self) -> np.ndarray:
        return self.labels == AREA_LIGHT

    @property
    def environment(self) -> np.ndarray:
        return self.labels == ENVIRONMENT

    @classmethod
    def from_channels(cls, channels):
        ch = np.asarray(channels)
        if ch.ndim != 3 or ch.shape[2] != 3:
            raise ValueError("mask channels must have shape (height, width, 3)")
        if not np.all((ch == 0) | (ch == 1)):
            raise ValueError("mask channels must be binary")
        if not np.all(ch.sum(axis=2) == 1):
            raise ValueError("mask channels must assign exactly one class per pixel")
        return cls(np.argmax(ch, axis=2))


# --------------------------------------------------------------------------
# PFM
# --------------------------------------------------------------------------

def _read_header_tokens(buf):
    """Split off the four header tokens (magic, width, height, scale).

    Returns the tokens and the offset of the first payload byte, which
    follows exactly one whitespace byte after the scale.
    """
    tokens = []
    pos, n = 0, len(buf)
    while len(tokens) < 4:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed PFM header: unexpected end of file")
        tokens.append(buf[start:pos])
        if len(tokens) == 1 and tokens[0] not in (b"PF", b"Pf"):
            raise ImageFormatError(f"malformed PFM header: bad magic {tokens[0][:8]!r}")
    if pos >= n:
        raise ImageFormatError("truncated PFM payload: no data after header")
    return tokens, pos + 1


def load_pfm_array(path) -> np.ndarray:
    """Read a PFM file into a top-down float32 array.

    Colour files give ``(h, w, 3)``, greyscale ``Pf`` files ``(h, w)``.
    Values may be negative (normal maps) but must be finite.
    """
    with open(path, "rb") as f:
        buf = f.read()
    tokens, offset = _read_header_tokens(buf)
    magic, w_tok, h_tok, scale_tok = tokens
    channels = 3 if magic == b"PF" else 1
    try:
        width, height = int(w_tok), int(h_tok)
        scale = float(scale_tok)
    except ValueError as exc:
        raise ImageFormatError(f"malformed PFM header: {exc}") from None
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"malformed PFM header: dimensions {width}x{height}")
    if scale == 0 or not np.isfinite(scale):
        raise ImageFormatError("malformed PFM header: scale must be non-zero and finite")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    payload = buf[offset:]
    if len(payload) < count * 4:
        raise ImageFormatError(
            f"truncated PFM payload: expected {count * 4} bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=dtype, count=count)
    if not np.all(np.isfinite(arr)):
        raise ImageFormatError("non-finite sample in PFM payload")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(arr.reshape(shape)).astype(np.float32)


def save_pfm_array(arr, path) -> None:
    """Write a ``(h, w)`` or ``(h, w, 3)`` array as little-endian PFM."""
    a = np.asarray(arr)
    if a.ndim == 3 and a.shape[2] == 3:
        magic = "PF"
    elif a.ndim == 2:
        magic = "Pf"
    else:
        raise ValueError(f"PFM needs shape (h, w) or (h, w, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot write non-finite samples to PFM")
    h, w = a.shape[:2]
    header = f"{magic}\n{w} {h}\n-1.0\n".encode("ascii")
    payload = np.ascontiguousarray(np.flipud(a), dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_pfm(path) -> HdrImage:
    arr = load_pfm_array(path)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    if np.any(arr < 0):
        raise ImageFormatError(f"{os.fspath(path)}: negative sample in HDR image")
    return HdrImage(arr)


def write_pfm(img: HdrImage, path) -> None:
    save_pfm_array(img.data, path)


# --------------------------------------------------------------------------
# Gamma
# --------------------------------------------------------------------------

def ldr_to_linear(img: LdrImage, gamma: float = DEFAULT_GAMMA) -> HdrImage:
    data = np.asarray(img.data if isinstance(img, LdrImage) else img, dtype=np.float64)
    if np.any(data < 0) or np.any(data > 1) or not np.all(np.isfinite(data)):
        raise ValueError("LDR values must lie in [0, 1]")
    return HdrImage(data ** gamma)


def linear_to_ldr(img: HdrImage, gamma: float = DEFAULT_GAMMA) -> LdrImage:
    data = np.asarray(img.data if isinstance(img, HdrImage) else img, dtype=np.float64)
    return LdrImage(np.clip(data, 0.0, 1.0) ** (1.0 / gamma))


# --------------------------------------------------------------------------
# PNG
# --------------------------------------------------------------------------

def read_png(path) -> LdrImage:
    from PIL import Image

    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return LdrImage(rgb)


def write_png(img: LdrImage, path) -> None:
    from PIL import Image

    data = img.data if isinstance(img, LdrImage) else np.asarray(img)
    Image.fromarray(np.round(np.clip(data, 0, 1) * 255).astype(np.uint8)).save(path)


def read_mask_png(path) -> MaskImage:
    """Read a three-class mask: red = object, green = area light, blue = environment."""
    from PIL import Image

    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"))
    return MaskImage.from_channels((rgb >= 128).astype(np.uint8))


def write_mask_png(mask: MaskImage, path) -> None:
    from PIL import Image

    Image.fromarray((mask.channels * 255).astype(np.uint8)).save(path)


def read_binary_mask(path) -> np.ndarray:
    """Single-channel PNG mask; any pixel >= 128 is set."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def write_binary_mask(mask, path) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255).save(path)


def load_image(path, gamma: float = DEFAULT_GAMMA) -> HdrImage:
    """Load a linear image from PFM, or gamma-decode an 8-bit PNG/JPEG."""
    if os.fspath(path).lower().endswith(".pfm"):
        return read_pfm(path)
    return ldr_to_linear(read_png(path), gamma)
