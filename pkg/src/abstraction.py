"""Polar segmentation of binary shapes and the normalized abstraction matrix."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from errors import ContractViolation, PixelOutsideRadiusError
from imagecore import BinaryImage

logger = logging.getLogger(__name__)


def default_radius(width: int, height: int) -> float:
    """Half the frame diagonal, so every pixel of a centered frame is in-radius."""
    return math.hypot(width, height) / 2.0


@dataclass(frozen=True)
class SegmentationParams:
    n_sectors: int
    m_segments: int
    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.n_sectors < 1 or self.m_segments < 1:
            raise ContractViolation(
                f"need at least one sector and segment, got N={self.n_sectors}, M={self.m_segments}"
            )
        if not self.radius > 0:
            raise ContractViolation(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def for_image(
        cls,
        img: BinaryImage,
        n_sectors: int,
        m_segments: int,
        center: tuple[float, float] | None = None,
    ) -> SegmentationParams:
        return cls(n_sectors, m_segments, center or img.center, default_radius(img.width, img.height))

    def to_dict(self) -> dict:
        return {
            "n_sectors": self.n_sectors,
            "m_segments": self.m_segments,
            "center": list(self.center),
            "radius": self.radius,
        }


@dataclass(frozen=True)
class AbstractionMatrix:
    """Γ: one normalized value per (sector, segment) cell, sectors along axis 0."""

    values: np.ndarray
    params: SegmentationParams

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        expected = (self.params.n_sectors, self.params.m_segments)
        if values.shape != expected:
            raise ContractViolation(f"matrix shape {values.shape} does not match params {expected}")
        if values.size and values.min() < 0:
            raise ContractViolation("abstraction values must be non-negative")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.params.n_sectors, self.params.m_segments

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        for row in self.values:
            writer.writerow(f"{value:.12g}" for value in row)
        return buffer.getvalue()

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "values": self.values.tolist()}


@dataclass(frozen=True)
class SegmentGrid:
    """The segmentation matrix I: per-sector unit directions and raw counts."""

    directions: np.ndarray  # (N, 2) sector bisector unit vectors
    gamma: np.ndarray  # (N, M) raw 1-pixel counts
    params: SegmentationParams

    def __len__(self) -> int:
        return int(self.gamma.size)

    def cell(self, n: int, m: int) -> tuple[float, float, float]:
        """The <x, y, γ> tuple of cell (n, m), 1-based like the sector/segment numbering."""
        x, y = self.directions[n - 1]
        return float(x), float(y), float(self.gamma[n - 1, m - 1])


# ============== Membership ==============

def classify(
    r: np.ndarray, phi: np.ndarray, n_sectors: int, m_segments: int
) -> tuple[np.ndarray, np.ndarray]:
    """0-based (sector, segment) for normalized radius r ∈ [0, 1] and angle phi in degrees.

    Sector n holds (360(n-1)/N, 360n/N], segment m holds ((m-1)/M, m/M].
    phi = 0 is the same direction as 360 and lands in the last sector; r = 0
    lands in the first segment.
    """
    r = np.asarray(r, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    sector = (np.ceil(phi * n_sectors / 360.0).astype(np.int64) - 1) % n_sectors
    segment = np.clip(np.ceil(r * m_segments).astype(np.int64) - 1, 0, m_segments - 1)
    return sector, segment


def cell_of_polar(r: float, phi: float, n_sectors: int, m_segments: int) -> tuple[int, int]:
    """1-based (n, m) of a point given in normalized polar coordinates."""
    if r < 0:
        raise ContractViolation(f"negative radius {r}")
    if r > 1.0:
        raise PixelOutsideRadiusError(f"normalized radius {r} exceeds 1")
    sector, segment = classify(np.array([r]), np.array([phi % 360.0]), n_sectors, m_segments)
    return int(sector[0]) + 1, int(segment[0]) + 1


def pixel_polar(
    xs: np.ndarray, ys: np.ndarray, center: tuple[float, float], radius: float
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized radius and angle (degrees, [0, 360)) of pixel centers.

    The centered frame has y pointing up so positive angles run counter-clockwise.
    """
    cx, cy = center
    dx = np.asarray(xs, dtype=np.float64) + 0.5 - cx
    dy = cy - (np.asarray(ys, dtype=np.float64) + 0.5)
    r = np.hypot(dx, dy) / radius
    phi = np.degrees(np.arctan2(dy, dx)) % 360.0
    return r, phi


def segment_of_pixel(px: tuple[int, int], params: SegmentationParams) -> tuple[int, int]:
    """1-based (n, m) cell of integer pixel (x, y)."""
    r, phi = pixel_polar(np.array([px[0]]), np.array([px[1]]), params.center, params.radius)
    if r[0] > 1.0:
        raise PixelOutsideRadiusError(f"pixel {px} lies outside radius {params.radius:.3f}")
    sector, segment = classify(r, phi, params.n_sectors, params.m_segments)
    return int(sector[0]) + 1, int(segment[0]) + 1


# ============== Aggregation ==============

class ShapeAbstractor:
    """Polar coordinates of one image's 1-pixels around a fixed center.

    Building Γ at successive levels only re-bins the cached coordinates.
    """

    def __init__(
        self,
        img: BinaryImage,
        center: tuple[float, float] | None = None,
        radius: float | None = None,
    ) -> None:
        self.img = img
        self.center = center or img.center
        self.radius = radius or default_radius(img.width, img.height)
        ys, xs = np.nonzero(img.bits)
        r, phi = pixel_polar(xs, ys, self.center, self.radius)
        inside = r <= 1.0
        self.excluded = int((~inside).sum())
        if self.excluded:
            logger.debug(f"{self.excluded} pixels outside radius {self.radius:.1f} around {self.center}")
        self._r = r[inside]
        self._phi = phi[inside]

    @property
    def pixel_count(self) -> int:
        return int(self._r.size)

    def params(self, n_sectors: int, m_segments: int) -> SegmentationParams:
        return SegmentationParams(n_sectors, m_segments, self.center, self.radius)

    def raw_counts(self, n_sectors: int, m_segments: int, rotation: float = 0.0) -> np.ndarray:
        """Counts per cell; `rotation` turns the shape counter-clockwise by that many degrees first."""
        phi = (self._phi + rotation) % 360.0 if rotation else self._phi
        sector, segment = classify(self._r, phi, n_sectors, m_segments)
        flat = np.bincount(sector * m_segments + segment, minlength=n_sectors * m_segments)
        return flat.reshape(n_sectors, m_segments)

    def abstract(self, n_sectors: int, m_segments: int, rotation: float = 0.0) -> AbstractionMatrix:
        return normalize(self.raw_counts(n_sectors, m_segments, rotation), self.params(n_sectors, m_segments))


def raw_counts(img: BinaryImage, params: SegmentationParams) -> np.ndarray:
    """Per-cell 1-pixel counts before normalization."""
    return ShapeAbstractor(img, params.center, params.radius).raw_counts(params.n_sectors, params.m_segments)


def normalize(raw: np.ndarray, params: SegmentationParams) -> AbstractionMatrix:
    """Unit-mean scaling; an all-zero matrix stays all zero."""
    raw = np.asarray(raw, dtype=np.float64)
    mean = raw.mean() if raw.size else 0.0
    values = raw / mean if mean > 0 else np.zeros_like(raw)
    return AbstractionMatrix(values, params)


def abstract(img: BinaryImage, params: SegmentationParams) -> AbstractionMatrix:
    return normalize(raw_counts(img, params), params)


def segment_grid(img: BinaryImage, params: SegmentationParams) -> SegmentGrid:
    bisectors = np.radians((np.arange(params.n_sectors) + 0.5) * 360.0 / params.n_sectors)
    directions = np.stack([np.cos(bisectors), np.sin(bisectors)], axis=1)
    return SegmentGrid(directions, raw_counts(img, params), params)


# ============== Export ==============

def export_csv(matrix: AbstractionMatrix, path: str | Path) -> Path:
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(matrix.to_csv(), encoding="utf-8")
    return file_path


def export_json(matrix: AbstractionMatrix, path: str | Path) -> Path:
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(json.dumps(matrix.to_dict(), indent=2), encoding="utf-8")
    return file_path
