"""Convergence metrics over the best candidates of a level (WM3 / WV3)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

# keeps 1/score finite for exact matches
KAPPA = 1e-9
TOP_K = 3

WEIGHTING = "inverse-dissimilarity: w = 1 / (score + 1e-9)"
MEAN_METHOD = "weighted circular mean of unit vectors"
VARIANCE_METHOD = (
    "unbiased reliability-weighted sample variance of signed circular deviations from WM3: "
    "sum(w (x - mu)^2) / (sum(w) - sum(w^2) / sum(w))"
)


class _Ranked(Protocol):
    angle: float
    score: float


@dataclass(frozen=True)
class ConvergenceMetrics:
    wm3: float
    wv3: float
    level: int
    top3: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "wm3": self.wm3,
            "wv3": self.wv3,
            "level": self.level,
            "top3": [{"angle": angle, "score": score} for angle, score in self.top3],
        }


def circular_difference(a: float, b: float) -> float:
    """Signed shortest angular distance a - b, in [-180, 180)."""
    return (a - b + 180.0) % 360.0 - 180.0


def weights(scores: Iterable[float]) -> list[float]:
    return [1.0 / (score + KAPPA) for score in scores]


def wm3(top3: Sequence[tuple[float, float]]) -> float:
    """Weighted circular mean of (angle, score) pairs, in [0, 360)."""
    if not top3:
        raise ValueError("need at least one candidate")
    w = weights(score for _, score in top3)
    x = sum(wi * math.cos(math.radians(angle)) for wi, (angle, _) in zip(w, top3))
    y = sum(wi * math.sin(math.radians(angle)) for wi, (angle, _) in zip(w, top3))
    mean = math.degrees(math.atan2(y, x)) % 360.0
    if 360.0 - mean < 1e-9:
        mean = 0.0
    return mean


def wv3(top3: Sequence[tuple[float, float]]) -> float:
    """Weighted sample variance (degrees²) of the angles around their circular mean."""
    if not top3:
        raise ValueError("need at least one candidate")
    mean = wm3(top3)
    w = weights(score for _, score in top3)
    v1 = sum(w)
    v2 = sum(wi * wi for wi in w)
    denominator = v1 - v2 / v1
    if denominator <= 0:
        return 0.0
    spread = sum(wi * circular_difference(angle, mean) ** 2 for wi, (angle, _) in zip(w, top3))
    return max(spread / denominator, 0.0)


def convergence(candidates: Sequence[_Ranked], level: int) -> ConvergenceMetrics:
    """Metrics over the first TOP_K of an already ranked candidate list."""
    top = tuple((float(c.angle), float(c.score)) for c in candidates[:TOP_K])
    return ConvergenceMetrics(wm3=wm3(top), wv3=wv3(top), level=level, top3=top)


def describe() -> dict:
    """Statistics conventions, embedded in every report."""
    return {
        "kappa": KAPPA,
        "top_k": TOP_K,
        "weighting": WEIGHTING,
        "mean": MEAN_METHOD,
        "variance": VARIANCE_METHOD,
    }
