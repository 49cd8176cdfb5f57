"""Per-level search records and the experiment report (JSON + CSV score tables)."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Any

import stats
from stats import ConvergenceMetrics

if TYPE_CHECKING:
    from search import Candidate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LevelRecord:
    level: int
    n_sectors: int
    candidates: list[Candidate]  # all of Δ_l, ranked
    upsilon: list[Candidate]
    metrics: ConvergenceMetrics
    abstraction_seconds: float = 0.0
    scoring_seconds: float = 0.0
    grid_size: int | None = None  # sectors = segments of Γ; n_sectors when omitted

    @property
    def best(self) -> Candidate:
        return self.upsilon[0]

    def to_dict(self, include_candidates: bool = True) -> dict:
        data: dict[str, Any] = {
            "level": self.level,
            "n_sectors": self.n_sectors,
            "grid": self.grid_size or self.n_sectors,
            "upsilon": [c.to_dict() for c in self.upsilon],
            "metrics": self.metrics.to_dict(),
            "timing": {
                "abstraction_seconds": self.abstraction_seconds,
                "scoring_seconds": self.scoring_seconds,
            },
        }
        if include_candidates:
            data["delta"] = [c.to_dict() for c in self.candidates]
        return data


@dataclass
class ExperimentReport:
    levels: list[LevelRecord]
    config: dict
    ground_truth: float | None = None
    seed: int | None = None
    metadata: dict = field(default_factory=dict)
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @property
    def final(self) -> LevelRecord:
        return self.levels[-1]

    @property
    def best(self) -> Candidate:
        return self.final.best

    @property
    def upsilon(self) -> list[Candidate]:
        return self.final.upsilon

    @property
    def wm3(self) -> float:
        return self.final.metrics.wm3

    @property
    def wv3(self) -> float:
        return self.final.metrics.wv3

    def level(self, level: int) -> LevelRecord:
        for record in self.levels:
            if record.level == level:
                return record
        raise KeyError(f"level {level} was not evaluated")

    def error(self) -> float | None:
        """Signed circular distance between final WM3 and the ground truth."""
        if self.ground_truth is None:
            return None
        return stats.circular_difference(self.wm3, self.ground_truth)

    def to_dict(self, include_candidates: bool = True) -> dict:
        return {
            "created_at": self.created_at,
            "config": self.config,
            "seed": self.seed,
            "ground_truth": self.ground_truth,
            "statistics": stats.describe(),
            "metadata": self.metadata,
            "result": {
                "wm3": self.wm3,
                "wv3": self.wv3,
                "error": self.error(),
                "upsilon": [c.to_dict() for c in self.upsilon],
            },
            "levels": [record.to_dict(include_candidates) for record in self.levels],
        }

    def write_json(self, path: str | Path, include_candidates: bool = True) -> Path:
        file_path = Path(path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_text(json.dumps(self.to_dict(include_candidates), indent=2), encoding="utf-8")
        logger.info(f"Report written: {file_path}")
        return file_path

    def write_score_tables(self, directory: str | Path) -> list[Path]:
        """One CSV per level with the score of every evaluated candidate (heatmap data)."""
        out_dir = Path(directory)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for record in self.levels:
            path = out_dir / f"scores_l{record.level}.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["shift", "angle", "tx", "ty", "score"])
                for c in sorted(record.candidates, key=lambda c: (c.shift, c.translation or (0, 0))):
                    tx, ty = c.translation or (0, 0)
                    writer.writerow([c.shift, f"{c.angle:.6f}", tx, ty, f"{c.score:.10g}"])
            paths.append(path)
        return paths
