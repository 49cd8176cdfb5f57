"""Raster loading, luminance, binarization and PBM output."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from errors import ContractViolation, ImageFormatError, ImageNotFoundError

logger = logging.getLogger(__name__)

# Rec. 709 luma weights
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)
BINARY_THRESHOLD = 128

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PLAIN_PNM_MAGIC = (b"P1", b"P2", b"P3")
RAW_PNM_MAGIC = (b"P4", b"P5", b"P6")
_WHITESPACE = b" \t\r\n\x0b\x0c"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class RasterImage:
    """RGB pixels, shape (height, width, 3), values 0..255."""

    channels: np.ndarray

    def __post_init__(self) -> None:
        channels = np.asarray(self.channels)
        if channels.ndim != 3 or channels.shape[2] != 3:
            raise ContractViolation(f"expected (height, width, 3) channels, got {channels.shape}")
        if channels.shape[0] < 1 or channels.shape[1] < 1:
            raise ContractViolation("image must be at least 1x1")
        if channels.size and (channels.min() < 0 or channels.max() > 255):
            raise ContractViolation("channel values must lie in [0, 255]")
        object.__setattr__(self, "channels", _frozen(channels.astype(np.uint8)))

    @property
    def width(self) -> int:
        return int(self.channels.shape[1])

    @property
    def height(self) -> int:
        return int(self.channels.shape[0])


@dataclass(frozen=True)
class GrayImage:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ContractViolation(f"expected a non-empty 2D gray image, got {values.shape}")
        if values.min() < 0 or values.max() > 255:
            raise ContractViolation("gray values must lie in [0, 255]")
        object.__setattr__(self, "values", _frozen(values.astype(np.uint8)))

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class BinaryImage:
    """Binary shape; `bits[y, x]` is 1 for figure pixels.

    `center` is the segmentation origin in pixel units (x right, y down),
    defaulting to the geometric center of the frame.
    """

    bits: np.ndarray
    center: tuple[float, float] | None = field(default=None)

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ContractViolation(f"expected a non-empty 2D bit array, got {bits.shape}")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ContractViolation("binary pixels must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(bits.astype(np.uint8)))
        height, width = bits.shape
        if self.center is None:
            object.__setattr__(self, "center", (width / 2.0, height / 2.0))
        else:
            cx, cy = float(self.center[0]), float(self.center[1])
            if not (0.0 <= cx <= width and 0.0 <= cy <= height):
                raise ContractViolation(f"center ({cx}, {cy}) outside the {width}x{height} frame")
            object.__setattr__(self, "center", (cx, cy))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    def count(self) -> int:
        return int(self.bits.sum())

    def with_center(self, cx: float, cy: float) -> BinaryImage:
        return BinaryImage(self.bits, (cx, cy))

    def with_bits(self, bits: np.ndarray) -> BinaryImage:
        """Same frame and center, new pixels."""
        return BinaryImage(bits, self.center)

    def to_gray(self) -> GrayImage:
        return GrayImage(self.bits * 255)

    def to_raster(self) -> RasterImage:
        return RasterImage(np.repeat((self.bits * 255)[:, :, None], 3, axis=2))


def luminance(img: RasterImage) -> GrayImage:
    """Weighted luma, rounded half-up and clamped to 0..255."""
    rgb = img.channels.astype(np.float64)
    r_w, g_w, b_w = LUMA_WEIGHTS
    lum = r_w * rgb[:, :, 0] + g_w * rgb[:, :, 1] + b_w * rgb[:, :, 2]
    return GrayImage(np.clip(np.floor(lum + 0.5), 0, 255).astype(np.uint8))


def binarize(gray: GrayImage, center: tuple[float, float] | None = None) -> BinaryImage:
    return BinaryImage(gray.values // BINARY_THRESHOLD, center)


# ============== Loading ==============

# Pillow decodes P1/P2/P3 too; this reader exists so errors carry the byte offset.
class _PlainPnmReader:
    """Token reader for the ASCII (P1/P2/P3) netpbm formats."""

    def __init__(self, data: bytes, path: str) -> None:
        self.data = data
        self.path = path
        self.pos = 0

    def _skip(self) -> None:
        data = self.data
        while self.pos < len(data):
            char = data[self.pos]
            if char in _WHITESPACE:
                self.pos += 1
            elif char == ord("#"):
                newline = data.find(b"\n", self.pos)
                self.pos = len(data) if newline < 0 else newline + 1
            else:
                break

    def magic(self) -> bytes:
        token = self.data[:2]
        self.pos = 2
        return token

    def integer(self, what: str) -> int:
        self._skip()
        start = self.pos
        while self.pos < len(self.data) and chr(self.data[self.pos]).isdigit():
            self.pos += 1
        if start == self.pos:
            if start >= len(self.data):
                raise ImageFormatError(self.path, f"unexpected end of data, expected {what}", start)
            raise ImageFormatError(self.path, f"expected {what}", start)
        return int(self.data[start:self.pos])

    def bit(self) -> int:
        # P1 rasters may omit whitespace between bits
        self._skip()
        if self.pos >= len(self.data):
            raise ImageFormatError(self.path, "unexpected end of data, expected pixel", self.pos)
        char = self.data[self.pos]
        if char not in (ord("0"), ord("1")):
            raise ImageFormatError(self.path, f"invalid PBM pixel {chr(char)!r}", self.pos)
        self.pos += 1
        return char - ord("0")

    def header(self) -> tuple[int, int]:
        width = self.integer("width")
        height = self.integer("height")
        if width < 1 or height < 1:
            raise ImageFormatError(self.path, f"invalid dimensions {width}x{height}", self.pos)
        return width, height


def _read_plain_pbm(data: bytes, path: str) -> np.ndarray:
    reader = _PlainPnmReader(data, path)
    reader.magic()
    width, height = reader.header()
    bits = [reader.bit() for _ in range(width * height)]
    return np.array(bits, dtype=np.uint8).reshape(height, width)


def _read_plain_graymap(data: bytes, path: str) -> np.ndarray:
    """P2/P3 samples scaled to 0..255, shape (height, width, 3)."""
    reader = _PlainPnmReader(data, path)
    magic = reader.magic()
    width, height = reader.header()
    maxval = reader.integer("maxval")
    if not 1 <= maxval <= 65535:
        raise ImageFormatError(path, f"invalid maxval {maxval}", reader.pos)
    samples_per_pixel = 3 if magic == b"P3" else 1
    samples = []
    for _ in range(width * height * samples_per_pixel):
        start = reader.pos
        value = reader.integer("sample")
        if value > maxval:
            raise ImageFormatError(path, f"sample {value} exceeds maxval {maxval}", start)
        samples.append(value)
    scaled = np.floor(np.array(samples, dtype=np.float64) * 255.0 / maxval + 0.5).astype(np.uint8)
    if samples_per_pixel == 1:
        return np.repeat(scaled.reshape(height, width)[:, :, None], 3, axis=2)
    return scaled.reshape(height, width, 3)


def _sniff_format(data: bytes, path: Path) -> str:
    if data[:2] == b"BM":
        return "bmp"
    if data[:8] == PNG_SIGNATURE:
        return "png"
    if data[:2] in PLAIN_PNM_MAGIC + RAW_PNM_MAGIC:
        return "pnm"
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("bmp", "png", "pbm", "pgm", "ppm", "pnm"):
        return "pnm" if suffix.startswith("p") and suffix != "png" else suffix
    raise ImageFormatError(str(path), "unrecognized image signature", 0)


def _read_bytes(path: str | Path) -> tuple[Path, bytes]:
    file_path = Path(path)
    if not file_path.is_file():
        raise ImageNotFoundError(str(file_path))
    return file_path, file_path.read_bytes()


def _open_with_pillow(data: bytes, path: str) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ImageFormatError(path, f"cannot decode image: {e}") from e
    return img


def _flatten_on_white(img: Image.Image) -> Image.Image:
    """Drop alpha and palettes against a white background."""
    if img.mode in ("RGBA", "LA", "PA", "P") or "transparency" in img.info:
        rgba = img.convert("RGBA")
        background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        return Image.alpha_composite(background, rgba).convert("RGB")
    return img.convert("RGB")


def load_image(path: str | Path, format: str | None = None) -> RasterImage:
    """Load BMP, PNG or netpbm into RGB channels."""
    file_path, data = _read_bytes(path)
    fmt = (format or _sniff_format(data, file_path)).lower()
    if fmt in ("pbm", "pgm", "ppm"):
        fmt = "pnm"

    if fmt == "pnm" and data[:2] == b"P1":
        bits = _read_plain_pbm(data, str(file_path))
        # netpbm: 1 is black
        gray = np.where(bits == 1, 0, 255).astype(np.uint8)
        return RasterImage(np.repeat(gray[:, :, None], 3, axis=2))
    if fmt == "pnm" and data[:2] in (b"P2", b"P3"):
        return RasterImage(_read_plain_graymap(data, str(file_path)))

    img = _open_with_pillow(data, str(file_path))
    return RasterImage(np.asarray(_flatten_on_white(img), dtype=np.uint8))


def load_binary(path: str | Path) -> BinaryImage:
    """Load a shape; PBM bits are taken as-is, other formats go through luminance."""
    file_path, data = _read_bytes(path)
    if data[:2] == b"P1":
        return BinaryImage(_read_plain_pbm(data, str(file_path)))
    if data[:2] == b"P4":
        img = _open_with_pillow(data, str(file_path))
        return BinaryImage((np.asarray(img.convert("L")) == 0).astype(np.uint8))
    return binarize(luminance(load_image(file_path)))


def save_binary(img: BinaryImage, path: str | Path) -> Path:
    """Write a plain PBM, or a black/white PNG when the suffix is .png."""
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    if file_path.suffix.lower() == ".png":
        Image.fromarray((img.bits * 255).astype(np.uint8)).save(file_path, format="PNG")
        return file_path

    lines = [b"P1", f"{img.width} {img.height}".encode("ascii")]
    for row in img.bits:
        text = " ".join("1" if bit else "0" for bit in row)
        # netpbm caps plain lines at 70 characters
        while len(text) > 70:
            cut = text.rfind(" ", 0, 70)
            lines.append(text[:cut].encode("ascii"))
            text = text[cut + 1:]
        lines.append(text.encode("ascii"))
    file_path.write_bytes(b"\n".join(lines) + b"\n")
    logger.debug(f"Saved {img.width}x{img.height} PBM to {file_path}")
    return file_path
