"""Coarse-to-fine search over circular shifts (and optional translations).

Level l abstracts both shapes into 2^l sectors × 2^l segments. Every
hypothesis of Δ_l is scored, the ε best are kept as Υ_l, and each of them is
rescaled to the next level and widened by ±λ shifts.

Once the grid reaches the resolution ceiling it stops growing. Deeper levels
keep halving the angular step. With r = 2^(l - ceiling), shift s is the
whole-sector shift s // r of the ceiling grid applied after turning A's polar
angles by (s mod r) angular steps.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable

import numpy as np

import stats
from abstraction import AbstractionMatrix, SegmentationParams, ShapeAbstractor, default_radius
from errors import ConfigError, ContractViolation
from imagecore import BinaryImage
from reports import ExperimentReport, LevelRecord
from similarity import SimilarityConfig, score_shifts

logger = logging.getLogger(__name__)

Translation = tuple[int, int]
LevelCallback = Callable[[LevelRecord], None]

MAX_OMEGA = 12


@dataclass(frozen=True)
class Transformation:
    shift: int
    translation: Translation | None = None


@dataclass(frozen=True)
class Candidate:
    shift: int
    score: float
    level: int
    n_sectors: int
    translation: Translation | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.shift < self.n_sectors:
            raise ContractViolation(f"shift {self.shift} outside [0, {self.n_sectors})")
        if self.score < 0:
            raise ContractViolation(f"negative score {self.score}")

    @property
    def angle(self) -> float:
        return self.shift * 360.0 / self.n_sectors

    @property
    def transformation(self) -> Transformation:
        return Transformation(self.shift, self.translation)

    def to_dict(self) -> dict:
        data: dict[str, Any] = {
            "shift": self.shift,
            "angle": self.angle,
            "score": self.score,
            "level": self.level,
        }
        if self.translation is not None:
            data["tx"], data["ty"] = self.translation
        return data


def rank_key(candidate: Candidate) -> tuple:
    """Ascending score, then smaller shift, then smaller |translation|."""
    tx, ty = candidate.translation or (0, 0)
    return candidate.score, candidate.shift, tx * tx + ty * ty, tx, ty


@dataclass(frozen=True)
class SearchConfig:
    omega: int = 3
    epsilon: int = 10
    lambda_: int = 10
    rho: float = 1.0
    translation_enabled: bool = False
    translation_stride: int = 8
    translation_signed: bool = False
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    resolution_cap: bool = True
    min_segment_pixels: float = 1.0
    angular_refinement: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.omega <= MAX_OMEGA:
            raise ConfigError(f"omega must be in [1, {MAX_OMEGA}], got {self.omega}")
        if self.epsilon < 1:
            raise ConfigError(f"epsilon must be >= 1, got {self.epsilon}")
        if self.lambda_ < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_}")
        if not 0 < self.rho <= 360:
            raise ConfigError(f"rho must be in (0, 360], got {self.rho}")
        if self.translation_stride < 1:
            raise ConfigError(f"translation stride must be >= 1, got {self.translation_stride}")
        if self.min_segment_pixels <= 0:
            raise ConfigError(f"min_segment_pixels must be positive, got {self.min_segment_pixels}")
        depth = self.similarity.neighborhood_depth
        if depth >= 2 ** self.omega:
            raise ConfigError(f"neighborhood depth {depth} needs omega > log2({depth})")

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "epsilon": self.epsilon,
            "lambda": self.lambda_,
            "rho": self.rho,
            "neighborhood_depth": self.similarity.neighborhood_depth,
            "translation": {
                "enabled": self.translation_enabled,
                "stride": self.translation_stride,
                "signed": self.translation_signed,
            },
            "resolution_cap": self.resolution_cap,
            "min_segment_pixels": self.min_segment_pixels,
            "angular_refinement": self.angular_refinement,
        }

    @classmethod
    def from_dict(cls, data: dict, base: SearchConfig | None = None) -> SearchConfig:
        """Overlay a config-file style mapping on `base` (defaults when omitted)."""
        base = base or cls()
        known = {"omega", "epsilon", "lambda", "rho", "neighborhood_depth", "translation",
                 "resolution_cap", "min_segment_pixels", "angular_refinement"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        translation = data.get("translation") or {}
        if not isinstance(translation, dict):
            raise ConfigError("'translation' must be an object")
        unknown = set(translation) - {"enabled", "stride", "signed"}
        if unknown:
            raise ConfigError(f"unknown translation keys: {', '.join(sorted(unknown))}")
        try:
            return cls(
                omega=int(data.get("omega", base.omega)),
                epsilon=int(data.get("epsilon", base.epsilon)),
                lambda_=int(data.get("lambda", base.lambda_)),
                rho=float(data.get("rho", base.rho)),
                translation_enabled=bool(translation.get("enabled", base.translation_enabled)),
                translation_stride=int(translation.get("stride", base.translation_stride)),
                translation_signed=bool(translation.get("signed", base.translation_signed)),
                similarity=SimilarityConfig(
                    int(data.get("neighborhood_depth", base.similarity.neighborhood_depth))
                ),
                resolution_cap=bool(data.get("resolution_cap", base.resolution_cap)),
                min_segment_pixels=float(data.get("min_segment_pixels", base.min_segment_pixels)),
                angular_refinement=bool(data.get("angular_refinement", base.angular_refinement)),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ContractViolation):
                raise ConfigError(str(e)) from e
            raise ConfigError(f"invalid config value: {e}") from e


@dataclass(frozen=True)
class IterationState:
    level: int
    params: SegmentationParams
    delta: list[Transformation]
    upsilon: list[Candidate] = field(default_factory=list)
    angular_sectors: int | None = None

    @property
    def n_angles(self) -> int:
        """Angular steps per turn; a multiple of the grid's sector count."""
        return self.angular_sectors or self.params.n_sectors


# ============== Hypotheses ==============

def rotation_set(n_sectors: int) -> list[float]:
    if n_sectors < 1:
        raise ContractViolation(f"need at least one sector, got {n_sectors}")
    return [360.0 * i / n_sectors for i in range(n_sectors)]


def circular_shift(matrix: AbstractionMatrix, k: int) -> AbstractionMatrix:
    """Rotate sector rows by k: sector n takes the values of sector n - k."""
    return AbstractionMatrix(np.roll(matrix.values, k % matrix.params.n_sectors, axis=0), matrix.params)


def translation_grid(cfg: SearchConfig, width: int, height: int) -> list[Translation]:
    """Offsets {0, s, 2s, ...} inside the frame on both axes (mirrored when signed)."""
    if not cfg.translation_enabled:
        raise ContractViolation("translation search is disabled")
    stride = cfg.translation_stride

    def axis(size: int) -> list[int]:
        steps = range(0, size, stride)
        if not cfg.translation_signed:
            return list(steps)
        return sorted({sign * step for step in steps for sign in (1, -1)})

    return list(itertools.product(axis(width), axis(height)))


def refine(upsilon_prev: Iterable[Candidate], level: int, cfg: SearchConfig) -> list[Transformation]:
    """Δ_l: every retained shift rescaled to 2^l sectors and widened by ±0..λ."""
    upsilon_prev = list(upsilon_prev)
    if not upsilon_prev:
        raise ContractViolation("cannot refine an empty candidate set")
    n_sectors = 2 ** level
    delta: set[Transformation] = set()
    for candidate in upsilon_prev:
        base = candidate.shift * n_sectors // candidate.n_sectors
        for j in range(cfg.lambda_ + 1):
            delta.add(Transformation((base + j) % n_sectors, candidate.translation))
            delta.add(Transformation((base - j) % n_sectors, candidate.translation))
    return sorted(delta, key=lambda t: (t.shift, t.translation or (0, 0)))


# ============== Level bounds ==============

def precision_level(rho: float) -> int:
    """⌈log2(360/ρ)⌉: the level whose sectors are no wider than ρ degrees."""
    if not 0 < rho <= 360:
        raise ContractViolation(f"rho must be in (0, 360], got {rho}")
    return max(0, math.ceil(math.log2(360.0 / rho) - 1e-12))


def resolution_ceiling(width: int, height: int, min_segment_pixels: float = 1.0) -> int:
    """Deepest level whose innermost segment still covers `min_segment_pixels` pixels.

    The innermost segment is π(R/M)²/N = πR²/8^l, with N = M = 2^l.
    """
    disc = math.pi * default_radius(width, height) ** 2
    level = 0
    while disc / 8 ** (level + 1) >= min_segment_pixels:
        level += 1
    return level


def max_level(rho: float, image: BinaryImage, cfg: SearchConfig | None = None) -> int:
    limit = precision_level(rho)
    if cfg is None or cfg.resolution_cap:
        min_pixels = cfg.min_segment_pixels if cfg else 1.0
        limit = min(limit, resolution_ceiling(image.width, image.height, min_pixels))
    return limit


# ============== Evaluation ==============

class PairAbstractor:
    """Γ_A and Γ_B(translation) builder with cached polar coordinates."""

    def __init__(self, img_a: BinaryImage, img_b: BinaryImage) -> None:
        self.img_a = img_a
        self.img_b = img_b
        self.build_seconds = 0.0
        started = time.perf_counter()
        self._a = ShapeAbstractor(img_a)
        self._b: dict[Translation, ShapeAbstractor] = {(0, 0): ShapeAbstractor(img_b)}
        self.build_seconds += time.perf_counter() - started

    def params(self, n_sectors: int, m_segments: int) -> SegmentationParams:
        return self._a.params(n_sectors, m_segments)

    def _abstractor_b(self, translation: Translation) -> ShapeAbstractor:
        cached = self._b.get(translation)
        if cached is not None:
            return cached
        cx, cy = self.img_b.center
        tx, ty = translation
        return ShapeAbstractor(self.img_b, (cx + tx, cy + ty))

    def gamma_a(self, n_sectors: int, m_segments: int, rotation: float = 0.0) -> AbstractionMatrix:
        started = time.perf_counter()
        gamma = self._a.abstract(n_sectors, m_segments, rotation)
        self.build_seconds += time.perf_counter() - started
        return gamma

    def gamma_b(self, n_sectors: int, m_segments: int, translation: Translation | None) -> AbstractionMatrix:
        started = time.perf_counter()
        gamma = self._abstractor_b(translation or (0, 0)).abstract(n_sectors, m_segments)
        self.build_seconds += time.perf_counter() - started
        return gamma

    def retain(self, translations: Iterable[Translation | None]) -> None:
        """Keep coordinate caches only for translations still in play."""
        started = time.perf_counter()
        keys = {t or (0, 0) for t in translations}
        self._b = {key: self._abstractor_b(key) for key in keys}
        self.build_seconds += time.perf_counter() - started


def evaluate_level(
    img_a: BinaryImage,
    img_b: BinaryImage,
    state: IterationState,
    cfg: SearchConfig,
    pair: PairAbstractor | None = None,
) -> list[Candidate]:
    """Score every hypothesis of Δ_l; returns candidates ranked best first."""
    if not state.delta:
        raise ContractViolation("empty candidate set")
    pair = pair or PairAbstractor(img_a, img_b)
    n_sectors, m_segments = state.params.n_sectors, state.params.m_segments
    n_angles = state.n_angles
    if n_angles % n_sectors:
        raise ContractViolation(f"{n_angles} angular steps do not split {n_sectors} sectors evenly")
    cfg.similarity.check_shape((n_sectors, m_segments))
    ratio = n_angles // n_sectors

    groups: dict[tuple[Translation | None, int], list[int]] = {}
    for t in state.delta:
        shift = t.shift % n_angles
        groups.setdefault((t.translation, shift % ratio), []).append(shift)

    gammas_a: dict[int, AbstractionMatrix] = {}
    candidates = []
    for (translation, offset), shifts in groups.items():
        if offset not in gammas_a:
            gammas_a[offset] = pair.gamma_a(n_sectors, m_segments, rotation=offset * 360.0 / n_angles)
        gamma_b = pair.gamma_b(n_sectors, m_segments, translation)
        scores = score_shifts(gammas_a[offset], gamma_b, [shift // ratio for shift in shifts], cfg.similarity)
        candidates.extend(
            Candidate(shift, float(score), state.level, n_angles, translation)
            for shift, score in zip(shifts, scores)
        )
    candidates.sort(key=rank_key)
    return candidates


def run(
    img_a: BinaryImage,
    img_b: BinaryImage,
    cfg: SearchConfig,
    *,
    ground_truth: float | None = None,
    seed: int | None = None,
    metadata: dict | None = None,
    on_level: LevelCallback | None = None,
) -> ExperimentReport:
    """Iterate from level ω to the precision/resolution bound and report Υ per level."""
    grid_level = max(cfg.omega, min(max_level(cfg.rho, img_a, cfg), max_level(cfg.rho, img_b, cfg)))
    final_level = max(cfg.omega, precision_level(cfg.rho)) if cfg.angular_refinement else grid_level
    pair = PairAbstractor(img_a, img_b)

    level = cfg.omega
    n_sectors = 2 ** level
    translations: list[Translation | None] = (
        list(translation_grid(cfg, img_b.width, img_b.height)) if cfg.translation_enabled else [None]
    )
    delta = [Transformation(shift, t) for t in translations for shift in range(n_sectors)]
    logger.info(
        f"Search: levels {cfg.omega}..{final_level} (grid up to {grid_level}), "
        f"{len(translations)} translation(s), epsilon={cfg.epsilon}, lambda={cfg.lambda_}"
    )

    records: list[LevelRecord] = []
    while True:
        n_sectors = 2 ** level
        grid = 2 ** min(level, grid_level)
        state = IterationState(level, pair.params(grid, grid), delta, angular_sectors=n_sectors)

        build_before = pair.build_seconds
        started = time.perf_counter()
        ranked = evaluate_level(img_a, img_b, state, cfg, pair=pair)
        elapsed = time.perf_counter() - started
        build = pair.build_seconds - build_before

        state = replace(state, upsilon=ranked[: cfg.epsilon])
        assert state.upsilon, "top-epsilon set cannot be empty"
        record = LevelRecord(
            level=level,
            n_sectors=n_sectors,
            candidates=ranked,
            upsilon=state.upsilon,
            metrics=stats.convergence(state.upsilon, level),
            abstraction_seconds=build,
            scoring_seconds=max(elapsed - build, 0.0),
            grid_size=grid,
        )
        records.append(record)
        best = record.best
        logger.info(
            f"[level {level}] N={n_sectors} grid={grid}x{grid} candidates={len(ranked)} "
            f"best={best.angle:.3f}° score={best.score:.4f} "
            f"WM3={record.metrics.wm3:.3f} WV3={record.metrics.wv3:.3f}"
        )
        if on_level is not None:
            on_level(record)

        if level >= final_level:
            break
        pair.retain(c.translation for c in state.upsilon)
        level += 1
        delta = refine(state.upsilon, level, cfg)

    return ExperimentReport(
        levels=records,
        config=cfg.to_dict(),
        ground_truth=ground_truth,
        seed=seed,
        metadata={"final_level": final_level, "grid_level": grid_level, **(metadata or {})},
    )
