"""Configuration defaults (environment) and the JSON config file."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from errors import ConfigError
from search import SearchConfig
from similarity import SimilarityConfig

load_dotenv()

# Search defaults
OMEGA = int(os.getenv("SHAPEREG_OMEGA", "3"))
EPSILON = int(os.getenv("SHAPEREG_EPSILON", "10"))
LAMBDA = int(os.getenv("SHAPEREG_LAMBDA", "10"))
RHO = float(os.getenv("SHAPEREG_RHO", "1.0"))
NEIGHBORHOOD_DEPTH = int(os.getenv("SHAPEREG_DEPTH", "0"))
TRANSLATION_STRIDE = int(os.getenv("SHAPEREG_STRIDE", "8"))

# Seed for generated shapes and noise
SEED = int(os.getenv("SHAPEREG_SEED", "20180101"))

# Run history database (empty = disabled)
RUNS_DB: str | None = os.getenv("SHAPEREG_RUNS_DB") or None

LOG_LEVEL = os.getenv("SHAPEREG_LOG_LEVEL", "INFO")

# Rotation used by the default suite case
DEFAULT_THETA = 234.0

SUITE_KEYS = {"shape", "width", "height", "seed", "cases"}
CASE_KEYS = {"name", "theta", "noise_levels", "max_error"}


@dataclass(frozen=True)
class SuiteCase:
    name: str
    theta: float
    noise_levels: tuple[int, ...] = (0, 5_000, 50_000, 500_000)
    max_error: float | None = None


@dataclass(frozen=True)
class SuiteConfig:
    shape: str = "bee"
    width: int = 764
    height: int = 764
    seed: int = SEED
    cases: tuple[SuiteCase, ...] = field(default_factory=lambda: (SuiteCase("theta234", DEFAULT_THETA),))


@dataclass(frozen=True)
class FileConfig:
    search: SearchConfig
    suite: SuiteConfig


def default_search_config() -> SearchConfig:
    """SearchConfig built from the environment defaults."""
    try:
        return SearchConfig(
            omega=OMEGA,
            epsilon=EPSILON,
            lambda_=LAMBDA,
            rho=RHO,
            translation_stride=TRANSLATION_STRIDE,
            similarity=SimilarityConfig(NEIGHBORHOOD_DEPTH),
        )
    except ValueError as e:
        raise ConfigError(f"invalid environment defaults: {e}") from e


def _parse_case(index: int, data: dict) -> SuiteCase:
    if not isinstance(data, dict):
        raise ConfigError(f"suite case #{index} must be an object")
    unknown = set(data) - CASE_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in suite case #{index}: {', '.join(sorted(unknown))}")
    if "theta" not in data:
        raise ConfigError(f"suite case #{index} has no 'theta'")
    try:
        levels = tuple(int(n) for n in data.get("noise_levels", SuiteCase.noise_levels))
        max_error = data.get("max_error")
        case = SuiteCase(
            name=str(data.get("name") or f"case{index}"),
            theta=float(data["theta"]) % 360.0,
            noise_levels=levels,
            max_error=None if max_error is None else float(max_error),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid suite case #{index}: {e}") from e
    if any(n < 0 for n in case.noise_levels):
        raise ConfigError(f"suite case #{index}: noise levels must be >= 0")
    return case


def parse_suite(data: dict | None) -> SuiteConfig:
    if data is None:
        return SuiteConfig()
    if not isinstance(data, dict):
        raise ConfigError("'suite' must be an object")
    unknown = set(data) - SUITE_KEYS
    if unknown:
        raise ConfigError(f"unknown suite keys: {', '.join(sorted(unknown))}")
    defaults = SuiteConfig()
    cases = data.get("cases")
    try:
        suite = SuiteConfig(
            shape=str(data.get("shape", defaults.shape)),
            width=int(data.get("width", defaults.width)),
            height=int(data.get("height", defaults.height)),
            seed=int(data.get("seed", defaults.seed)),
            cases=defaults.cases if cases is None else tuple(_parse_case(i, c) for i, c in enumerate(cases, 1)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid suite config: {e}") from e
    if suite.width < 1 or suite.height < 1:
        raise ConfigError(f"invalid suite frame {suite.width}x{suite.height}")
    names = [case.name for case in suite.cases]
    if len(names) != len(set(names)):
        raise ConfigError("suite case names must be unique")
    return suite


def load_config_file(path: str | Path | None, base: SearchConfig | None = None) -> FileConfig:
    """Read a JSON config file and overlay it on the environment defaults."""
    base = base or default_search_config()
    if path is None:
        return FileConfig(search=base, suite=SuiteConfig())
    file_path = Path(path)
    try:
        data = json.loads(file_path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {file_path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{file_path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{file_path}: top level must be an object")
    suite = parse_suite(data.pop("suite", None))
    return FileConfig(search=SearchConfig.from_dict(data, base), suite=suite)
