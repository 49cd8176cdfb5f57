"""Synthetic shapes, ground-truth rotations, noise and the brute-force oracle."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from PIL import Image, ImageDraw

import search
import stats
from errors import ContractViolation, DimensionMismatchError
from imagecore import BinaryImage
from reports import ExperimentReport
from search import SearchConfig

logger = logging.getLogger(__name__)

SHAPE_KINDS = ("lines", "circles", "noise", "composite")
DEFAULT_NOISE_LEVELS = (0, 5_000, 50_000, 500_000)

# (x0, y0, x1, y1), end exclusive
Rect = tuple[int, int, int, int]
NoiseRegion = Union[Rect, np.ndarray, BinaryImage, None]


@dataclass(frozen=True)
class NoiseSpec:
    region: NoiseRegion
    draws: int
    seed: int

    def __post_init__(self) -> None:
        if self.draws < 0:
            raise ContractViolation(f"draws must be >= 0, got {self.draws}")


@dataclass(frozen=True)
class OracleResult:
    best_angle: float
    table: list[tuple[float, int]] = field(repr=False)

    def agreement(self, angle: float) -> int:
        for candidate, value in self.table:
            if math.isclose(candidate, angle):
                return value
        raise KeyError(angle)


@dataclass(frozen=True)
class SaturationResult:
    report: ExperimentReport
    ceiling: int

    def wv3_by_level(self) -> dict[int, float]:
        return {record.level: record.metrics.wv3 for record in self.report.levels}

    def wm3_change(self, level: int) -> float:
        """|WM3(level) - WM3(level - 1)|."""
        current, previous = self.report.level(level), self.report.level(level - 1)
        return abs(stats.circular_difference(current.metrics.wm3, previous.metrics.wm3))

    @property
    def saturation_level(self) -> int:
        """The level where WV3 stops decreasing (its first minimum)."""
        wv3 = self.wv3_by_level()
        return min(wv3, key=lambda level: (wv3[level], level))


# ============== Raster rotation ==============

def _round_half_away(values: np.ndarray) -> np.ndarray:
    return (np.sign(values) * np.floor(np.abs(values) + 0.5)).astype(np.int64)


def _rotation_terms(theta: float) -> tuple[float, float]:
    if theta % 90 == 0:
        quarter = int(theta // 90) % 4
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[quarter]
    radians = math.radians(theta)
    return math.cos(radians), math.sin(radians)


def rotate_point(x: float, y: float, theta: float) -> tuple[float, float]:
    """Counter-clockwise rotation of a point in the centered, y-up frame."""
    c, s = _rotation_terms(theta)
    return x * c - y * s, x * s + y * c


def _rotated_indices(img: BinaryImage, theta: float) -> tuple[np.ndarray, np.ndarray, int]:
    ys, xs = np.nonzero(img.bits)
    cx, cy = img.center
    dx = xs + 0.5 - cx
    dy = cy - (ys + 0.5)
    c, s = _rotation_terms(theta)
    rx = dx * c - dy * s
    ry = dx * s + dy * c
    cols = _round_half_away(cx + rx - 0.5)
    rows = _round_half_away(cy - ry - 0.5)
    inside = (cols >= 0) & (cols < img.width) & (rows >= 0) & (rows < img.height)
    return rows[inside], cols[inside], int(xs.size)


def rotate_raster(img: BinaryImage, theta: float) -> BinaryImage:
    """Rotate every 1-pixel about the segmentation center and round to the grid.

    Several source pixels may land on one target pixel; pixels leaving the
    frame are dropped.
    """
    rows, cols, _ = _rotated_indices(img, theta)
    bits = np.zeros_like(img.bits)
    bits[rows, cols] = 1
    return img.with_bits(bits)


def collision_count(img: BinaryImage, theta: float) -> int:
    """Source pixels that landed on an already occupied in-frame target."""
    rows, cols, _ = _rotated_indices(img, theta)
    distinct = np.unique(rows * img.width + cols).size
    return int(rows.size - distinct)


# ============== Noise ==============

def region_indices(region: NoiseRegion, height: int, width: int) -> np.ndarray:
    """Flat pixel indices of a noise region; None means the whole frame."""
    if region is None:
        return np.arange(height * width)
    if isinstance(region, BinaryImage):
        region = region.bits
    if isinstance(region, np.ndarray):
        if region.shape != (height, width):
            raise DimensionMismatchError(f"mask {region.shape} does not match frame {(height, width)}")
        return np.flatnonzero(region)
    x0, y0, x1, y1 = region
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ContractViolation(f"region {region} outside the {width}x{height} frame")
    ys, xs = np.mgrid[y0:y1, x0:x1]
    return (ys * width + xs).ravel()


def add_noise(img: BinaryImage, spec: NoiseSpec) -> BinaryImage:
    """Set `draws` uniformly chosen region pixels (with replacement) to 1."""
    pixels = region_indices(spec.region, img.height, img.width)
    if spec.draws == 0 or pixels.size == 0:
        return img
    rng = np.random.default_rng(spec.seed)
    picks = pixels[rng.integers(0, pixels.size, size=spec.draws)]
    bits = img.bits.copy().ravel()
    bits[picks] = 1
    return img.with_bits(bits.reshape(img.bits.shape))


# ============== Shape generation ==============

def _canvas(width: int, height: int) -> tuple[Image.Image, ImageDraw.ImageDraw]:
    canvas = Image.new("L", (width, height), color=0)
    return canvas, ImageDraw.Draw(canvas)


def _to_binary(canvas: Image.Image) -> BinaryImage:
    return BinaryImage((np.asarray(canvas) >= 128).astype(np.uint8))


def _ellipse_polygon(cx: float, cy: float, a: float, b: float, angle: float, points: int = 72) -> list[tuple[float, float]]:
    t = np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)
    c, s = math.cos(math.radians(angle)), math.sin(math.radians(angle))
    xs = cx + a * np.cos(t) * c - b * np.sin(t) * s
    ys = cy + a * np.cos(t) * s + b * np.sin(t) * c
    return list(zip(xs.tolist(), ys.tolist()))


def _random_circles(rng: np.random.Generator, count: int, size: float, cx: float, cy: float) -> list[tuple[float, float, float]]:
    circles = []
    for _ in range(count):
        radius = rng.uniform(0.05, 0.14) * size
        reach = rng.uniform(0.0, 0.45 * size - radius)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        circles.append((cx + reach * math.cos(angle), cy + reach * math.sin(angle), radius))
    return circles


def _random_lines(rng: np.random.Generator, count: int, size: float, cx: float, cy: float) -> list[tuple[float, float, float, float]]:
    lines = []
    for _ in range(count):
        ends = []
        for _ in range(2):
            reach = rng.uniform(0.0, 0.4 * size)
            angle = rng.uniform(0.0, 2.0 * math.pi)
            ends.extend((cx + reach * math.cos(angle), cy + reach * math.sin(angle)))
        lines.append(tuple(ends))
    return lines


def generate_shape(
    kind: str,
    width: int = 128,
    height: int = 128,
    seed: int = 0,
    *,
    lines: Sequence[tuple[float, float, float, float]] | None = None,
    circles: Sequence[tuple[float, float, float]] | None = None,
    count: int | None = None,
    line_width: int | None = None,
    density: float = 0.02,
) -> BinaryImage:
    """Rasterize lines, filled circles, random pixels, or all three.

    Explicit primitives are in pixel units. Random ones are drawn from `seed`
    in units of the shorter side and stay inside the inscribed disc, so the
    same seed renders the same shape at any resolution.
    """
    if kind not in SHAPE_KINDS:
        raise ContractViolation(f"unknown shape kind {kind!r}, expected one of {', '.join(SHAPE_KINDS)}")
    if width < 1 or height < 1:
        raise ContractViolation(f"invalid frame {width}x{height}")
    if count is not None and count < 0:
        raise ContractViolation(f"count must be >= 0, got {count}")
    if not 0.0 <= density <= 1.0:
        raise ContractViolation(f"density must be in [0, 1], got {density}")

    rng = np.random.default_rng(seed)
    size = float(min(width, height))
    cx, cy = width / 2.0, height / 2.0
    canvas, draw = _canvas(width, height)

    if kind in ("circles", "composite"):
        if circles is None:
            circles = _random_circles(rng, 3 if count is None else count, size, cx, cy)
        for x, y, r in circles:
            if r <= 0:
                raise ContractViolation(f"circle radius must be positive, got {r}")
            span = max(2 * r - 1, 0)
            draw.ellipse([x - r, y - r, x - r + span, y - r + span], fill=255)

    if kind in ("lines", "composite"):
        explicit = lines is not None
        if lines is None:
            lines = _random_lines(rng, 4 if count is None else count, size, cx, cy)
        stroke = line_width or (1 if explicit else max(1, round(0.03 * size)))
        for x0, y0, x1, y1 in lines:
            draw.line([(x0, y0), (x1, y1)], fill=255, width=stroke)

    shape = _to_binary(canvas)
    if kind in ("noise", "composite"):
        ys, xs = np.mgrid[0:height, 0:width]
        disc = np.hypot(xs + 0.5 - cx, ys + 0.5 - cy) <= 0.45 * size
        speckle = (rng.random((height, width)) < density) & disc
        shape = shape.with_bits(shape.bits | speckle.astype(np.uint8))
    return shape


def bee_like_shape(width: int = 764, height: int = 764) -> tuple[BinaryImage, BinaryImage]:
    """Stand-in for the bee test image: returns (shape, body mask).

    Roughly 35% of the frame is figure; the thorax+abdomen mask (about a fifth
    of the frame) is the region that receives noise.
    """
    s = float(min(width, height))
    ox, oy = (width - s) / 2.0, (height - s) / 2.0

    def at(x: float, y: float) -> tuple[float, float]:
        return ox + x * s, oy + y * s

    canvas, draw = _canvas(width, height)
    body_canvas, body_draw = _canvas(width, height)

    for target in (draw, body_draw):
        x, y = at(0.5, 0.34)
        target.ellipse([x - 0.13 * s, y - 0.13 * s, x + 0.13 * s, y + 0.13 * s], fill=255)
        target.polygon(_ellipse_polygon(*at(0.5, 0.6), 0.2 * s, 0.29 * s, 0.0), fill=255)

    x, y = at(0.5, 0.18)
    draw.ellipse([x - 0.09 * s, y - 0.09 * s, x + 0.09 * s, y + 0.09 * s], fill=255)
    draw.polygon(_ellipse_polygon(*at(0.3, 0.3), 0.21 * s, 0.13 * s, 30.0), fill=255)
    draw.polygon(_ellipse_polygon(*at(0.71, 0.28), 0.19 * s, 0.11 * s, -20.0), fill=255)

    leg_width = max(1, round(0.012 * s))
    for (x0, y0), (x1, y1) in (
        ((0.42, 0.38), (0.22, 0.52)),
        ((0.42, 0.42), (0.25, 0.62)),
        ((0.43, 0.46), (0.3, 0.72)),
        ((0.58, 0.37), (0.8, 0.45)),
        ((0.58, 0.41), (0.77, 0.58)),
        ((0.57, 0.45), (0.68, 0.7)),
    ):
        draw.line([at(x0, y0), at(x1, y1)], fill=255, width=leg_width)
    draw.line([at(0.47, 0.12), at(0.38, 0.05)], fill=255, width=leg_width)
    draw.line([at(0.53, 0.12), at(0.6, 0.04)], fill=255, width=leg_width)

    stripe_width = max(1, round(0.015 * s))
    for y in (0.52, 0.62, 0.72):
        draw.line([at(0.3, y), at(0.7, y)], fill=0, width=stripe_width)

    return _to_binary(canvas), _to_binary(body_canvas)


# ============== Oracle and experiments ==============

def oracle_rotation(img_a: BinaryImage, img_b: BinaryImage, step: float = 1.0, workers: int = 1) -> OracleResult:
    """Brute-force sweep: rotate A by every multiple of `step` and count agreeing pixels with B."""
    if step <= 0:
        raise ContractViolation(f"step must be positive, got {step}")
    if img_a.bits.shape != img_b.bits.shape:
        raise DimensionMismatchError(f"frames differ: {img_a.bits.shape} vs {img_b.bits.shape}")
    angles = [i * step for i in range(int(math.ceil(360.0 / step - 1e-9)))]

    def agreement(angle: float) -> int:
        return int((rotate_raster(img_a, angle).bits == img_b.bits).sum())

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(agreement, angles))
    else:
        values = [agreement(angle) for angle in angles]
    table = list(zip(angles, values))
    best = max(range(len(table)), key=lambda i: (table[i][1], -i))
    return OracleResult(best_angle=table[best][0], table=table)


def run_noise_suite(
    img_a: BinaryImage,
    theta: float,
    noise_levels: Sequence[int] = DEFAULT_NOISE_LEVELS,
    cfg: SearchConfig | None = None,
    *,
    region: NoiseRegion = None,
    seed: int = 0,
) -> list[ExperimentReport]:
    """Shape B = rotate(A, θ) + noise, one search per noise level (T1, T2, ...).

    A mask region is rotated with the shape so the noise covers the same
    part of the figure. Every test reuses `seed`, so the noise of a smaller
    level is a subset of the noise of a larger one.
    """
    cfg = cfg or SearchConfig()
    rotated = rotate_raster(img_a, theta)
    if isinstance(region, BinaryImage):
        region = rotate_raster(region.with_center(*img_a.center), theta)

    reports = []
    for index, draws in enumerate(noise_levels, start=1):
        name = f"T{index}"
        img_b = add_noise(rotated, NoiseSpec(region, draws, seed))
        logger.info(f"[{name}] theta={theta} draws={draws} noise_pixels={img_b.count() - rotated.count()}")
        report = search.run(
            img_a,
            img_b,
            cfg,
            ground_truth=theta,
            seed=seed,
            metadata={
                "test": name,
                "draws": draws,
                "noise_pixels": img_b.count() - rotated.count(),
                "region_pixels": int(region_indices(region, img_b.height, img_b.width).size),
                "rng": "numpy PCG64",
            },
        )
        reports.append(report)
    return reports


def run_saturation(img_a: BinaryImage, theta: float, cfg: SearchConfig | None = None, extra_levels: int = 4) -> SaturationResult:
    """Keep growing the grid past the resolution ceiling to observe WM3/WV3 saturation."""
    cfg = cfg or SearchConfig()
    ceiling = search.resolution_ceiling(img_a.width, img_a.height, cfg.min_segment_pixels)
    last = max(cfg.omega, ceiling + extra_levels)
    uncapped = replace(cfg, resolution_cap=False, rho=360.0 / 2 ** last)
    img_b = rotate_raster(img_a, theta)
    report = search.run(img_a, img_b, uncapped, ground_truth=theta, metadata={"resolution_ceiling": ceiling})
    result = SaturationResult(report=report, ceiling=ceiling)
    logger.info(f"Saturation: ceiling={ceiling}, WV3 minimum at level {result.saturation_level}")
    return result
