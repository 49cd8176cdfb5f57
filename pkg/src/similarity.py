"""Cell-wise dissimilarity between abstraction matrices.

Scores follow |a - b| / (a + b): 0 means identical cells, so every ranking
built on them minimizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from abstraction import AbstractionMatrix
from errors import ContractViolation, DimensionMismatchError


@dataclass(frozen=True)
class SimilarityConfig:
    neighborhood_depth: int = 0

    def __post_init__(self) -> None:
        if self.neighborhood_depth < 0:
            raise ContractViolation(f"neighborhood depth must be >= 0, got {self.neighborhood_depth}")

    @property
    def extended(self) -> bool:
        return self.neighborhood_depth > 0

    def check_shape(self, shape: tuple[int, int]) -> None:
        if self.extended and self.neighborhood_depth >= min(shape):
            raise ContractViolation(
                f"neighborhood depth {self.neighborhood_depth} needs more than {min(shape)} sectors/segments"
            )


def cell_score(a: float, b: float) -> float:
    if a < 0 or b < 0:
        raise ContractViolation(f"cell values must be non-negative, got ({a}, {b})")
    total = a + b
    if total == 0:
        return 0.0
    return abs(a - b) / total


def cell_scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise cell_score; empty pairs score 0."""
    total = a + b
    return np.divide(np.abs(a - b), total, out=np.zeros_like(total, dtype=np.float64), where=total > 0)


@lru_cache(maxsize=None)
def ring_offsets(distance: int) -> tuple[tuple[int, int], ...]:
    """(sector, segment) offsets at Chebyshev distance exactly `distance`."""
    return tuple(
        (dn, dm)
        for dn in range(-distance, distance + 1)
        for dm in range(-distance, distance + 1)
        if max(abs(dn), abs(dm)) == distance
    )


def ring_weight(depth: int, distance: int) -> float:
    """log_{d+2}(d+2-i): strictly decreasing in i, positive for i <= d."""
    return math.log(depth + 2 - distance) / math.log(depth + 2)


def _values(matrix: AbstractionMatrix | np.ndarray) -> np.ndarray:
    if isinstance(matrix, AbstractionMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=np.float64)


def _check_dimensions(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot compare {a.shape} with {b.shape}")


def _neighbor_view(scores: np.ndarray, dn: int, dm: int) -> np.ndarray:
    """scores[(n + dn) mod N, m + dm], zero where the segment index leaves the grid."""
    rolled = np.roll(scores, -dn, axis=0)
    if dm == 0:
        return rolled
    shifted = np.zeros_like(rolled)
    if dm > 0:
        shifted[:, :-dm] = rolled[:, dm:]
    else:
        shifted[:, -dm:] = rolled[:, :dm]
    return shifted


def extended_scores(scores: np.ndarray, depth: int) -> np.ndarray:
    """Add the weighted neighbor rings to per-cell scores."""
    result = scores.copy()
    for distance in range(1, depth + 1):
        weight = ring_weight(depth, distance)
        ring = np.zeros_like(scores)
        for dn, dm in ring_offsets(distance):
            ring += _neighbor_view(scores, dn, dm)
        result += weight * ring
    return result


def extended_cell_score(
    a: AbstractionMatrix | np.ndarray,
    b: AbstractionMatrix | np.ndarray,
    cell: tuple[int, int],
    cfg: SimilarityConfig,
) -> float:
    """j' of one 0-based cell: its own score plus weighted neighbor rings.

    Sectors wrap around, segments beyond the first/last are skipped.
    """
    a_values, b_values = _values(a), _values(b)
    _check_dimensions(a_values, b_values)
    n_sectors, m_segments = a_values.shape
    n, m = cell
    total = cell_score(a_values[n, m], b_values[n, m])
    for distance in range(1, cfg.neighborhood_depth + 1):
        ring_total = 0.0
        for dn, dm in ring_offsets(distance):
            nn, mm = (n + dn) % n_sectors, m + dm
            if 0 <= mm < m_segments:
                ring_total += cell_score(a_values[nn, mm], b_values[nn, mm])
        total += ring_weight(cfg.neighborhood_depth, distance) * ring_total
    return total


def score_values(a: np.ndarray, b: np.ndarray, cfg: SimilarityConfig | None = None) -> float:
    _check_dimensions(a, b)
    scores = cell_scores(a, b)
    if cfg is not None and cfg.extended:
        cfg.check_shape(a.shape)
        scores = extended_scores(scores, cfg.neighborhood_depth)
    return float(scores.sum())


def matrix_score(
    a: AbstractionMatrix | np.ndarray,
    b: AbstractionMatrix | np.ndarray,
    cfg: SimilarityConfig | None = None,
) -> float:
    """J(A, B): sum of (extended) cell scores, 0 iff cell-wise equal."""
    return score_values(_values(a), _values(b), cfg)


def score_shifts(
    a: AbstractionMatrix | np.ndarray,
    b: AbstractionMatrix | np.ndarray,
    shifts: Iterable[int],
    cfg: SimilarityConfig | None = None,
) -> np.ndarray:
    """J(shift(A, k), B) for every k, A's sectors rotated by k positions."""
    a_values, b_values = _values(a), _values(b)
    _check_dimensions(a_values, b_values)
    return np.array(
        [score_values(np.roll(a_values, k, axis=0), b_values, cfg) for k in shifts],
        dtype=np.float64,
    )
