"""Command-line entry point."""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import config
import harness
import search
from abstraction import ShapeAbstractor
from dependencies import get_store, init_dependencies
from errors import ConfigError, ContractViolation, ImageLoadError
from harness import NoiseSpec
from imagecore import BinaryImage, load_binary, save_binary
from reports import ExperimentReport
from search import SearchConfig
from similarity import SimilarityConfig
from utils import log_error, run_sync, safe_name

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CASE_FAILED = 1
EXIT_IO = 2
EXIT_CONFIG = 3


# ============== Parser ==============

def _search_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("search")
    group.add_argument("--config", help="JSON config file")
    group.add_argument("--omega", type=int, help="initial level (2^omega sectors)")
    group.add_argument("--epsilon", type=int, help="candidates kept per level")
    group.add_argument("--lambda", dest="lambda_", type=int, help="refinement half-width in shifts")
    group.add_argument("--rho", type=float, help="target precision in degrees")
    group.add_argument("--depth", type=int, help="neighborhood depth (0 = off)")
    group.add_argument("--translation", action="store_true", default=None, help="also search translations")
    group.add_argument("--signed", action="store_true", default=None, help="include negative translations")
    group.add_argument("--stride", type=int, help="translation grid stride in pixels")
    group.add_argument("--no-resolution-cap", dest="resolution_cap", action="store_false", default=None,
                       help="do not stop at the image-resolution level")
    group.add_argument("--no-angular-refinement", dest="angular_refinement", action="store_false", default=None,
                       help="stop at the resolution ceiling instead of refining the angle on its grid")
    return parent


def _common_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--json", action="store_true", help="machine-readable stdout")
    parent.add_argument("--db", default=config.RUNS_DB, help="SQLite run history (default: $SHAPEREG_RUNS_DB)")
    parent.add_argument("--log-level", default=config.LOG_LEVEL)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapereg", description="Rotation estimation between binary shapes")
    sub = parser.add_subparsers(dest="command", required=True)
    common, searching = _common_flags(), _search_flags()

    p = sub.add_parser("estimate", parents=[common, searching], help="estimate the rotation from A to B")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--ground-truth", type=float, help="known rotation, reported as error")
    p.add_argument("--seed", type=int, help="recorded in the report")
    p.add_argument("--out", default="out", help="report directory")

    p = sub.add_parser("abstract", parents=[common], help="print the abstraction matrix of an image")
    p.add_argument("image")
    p.add_argument("-n", "--sectors", type=int, default=8)
    p.add_argument("-m", "--segments", type=int, default=8)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", help="write to a file instead of stdout")

    p = sub.add_parser("generate", parents=[common], help="render a synthetic shape")
    p.add_argument("kind", choices=(*harness.SHAPE_KINDS, "bee"))
    p.add_argument("output")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--seed", type=int, default=config.SEED)
    p.add_argument("--count", type=int)
    p.add_argument("--density", type=float, default=0.02)
    p.add_argument("--mask", help="bee only: also write the body mask")

    p = sub.add_parser("rotate", parents=[common], help="rotate a shape about its center")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--theta", type=float, required=True)

    p = sub.add_parser("noise", parents=[common], help="add random 1-pixels")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, default=config.SEED)
    region = p.add_mutually_exclusive_group()
    region.add_argument("--region", help="x0,y0,x1,y1 (end exclusive)")
    region.add_argument("--mask", help="binary image whose 1-pixels form the region")

    p = sub.add_parser("suite", parents=[common, searching], help="run the rotation + noise test suite")
    p.add_argument("--seed", type=int, help="override the suite seed")
    p.add_argument("--out", default="out/suite", help="report directory")

    p = sub.add_parser("oracle", parents=[common], help="brute-force rotation by pixel agreement")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    return parser


def resolve_search_config(args: argparse.Namespace) -> config.FileConfig:
    """Environment defaults, then the config file, then explicit flags."""
    loaded = config.load_config_file(getattr(args, "config", None))
    cfg = loaded.search
    overrides = {
        name: getattr(args, name)
        for name in ("omega", "epsilon", "lambda_", "rho", "resolution_cap", "angular_refinement")
        if getattr(args, name, None) is not None
    }
    if getattr(args, "translation", None):
        overrides["translation_enabled"] = True
    if getattr(args, "signed", None):
        overrides["translation_signed"] = True
    if getattr(args, "stride", None) is not None:
        overrides["translation_stride"] = args.stride
    if getattr(args, "depth", None) is not None:
        try:
            overrides["similarity"] = SimilarityConfig(args.depth)
        except ContractViolation as e:
            raise ConfigError(str(e)) from e
    return replace(loaded, search=replace(cfg, **overrides))


# ============== Output ==============

def _print_report(report: ExperimentReport, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report.to_dict(include_candidates=False), indent=2))
        return
    print(f"WM3: {report.wm3:.3f}°  WV3: {report.wv3:.3f}  levels: {report.levels[0].level}..{report.final.level}")
    if report.ground_truth is not None:
        print(f"Ground truth: {report.ground_truth:.3f}°  error: {report.error():+.3f}°")
    print(f"{'#':>3} {'angle':>9} {'shift':>6} {'score':>12} {'translation':>12}")
    for rank, candidate in enumerate(report.upsilon, 1):
        translation = "" if candidate.translation is None else f"{candidate.translation}"
        print(f"{rank:>3} {candidate.angle:>9.3f} {candidate.shift:>6} {candidate.score:>12.6f} {translation:>12}")


def _write_report(report: ExperimentReport, out_dir: Path, name: str) -> Path:
    path = report.write_json(out_dir / f"{name}.json")
    report.write_score_tables(out_dir / f"{name}_scores")
    return path


def _record_run(kind: str, report: ExperimentReport, inputs: list[str], path: Path) -> None:
    store = get_store()
    if store:
        store.add_run(kind, report, inputs=inputs, report_path=path)


# ============== Commands ==============

def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = resolve_search_config(args).search
    img_a, img_b = load_binary(args.image_a), load_binary(args.image_b)
    started = time.perf_counter()
    report = search.run(
        img_a,
        img_b,
        cfg,
        ground_truth=args.ground_truth,
        seed=args.seed,
        metadata={"image_a": args.image_a, "image_b": args.image_b},
    )
    logger.info(f"Estimated in {time.perf_counter() - started:.2f}s")
    path = _write_report(report, Path(args.out), "report")
    _record_run("estimate", report, [args.image_a, args.image_b], path)
    _print_report(report, args.json)
    return EXIT_OK


def cmd_abstract(args: argparse.Namespace) -> int:
    if args.sectors < 1 or args.segments < 1:
        raise ConfigError(f"N and M must be >= 1, got N={args.sectors}, M={args.segments}")
    img = load_binary(args.image)
    matrix = ShapeAbstractor(img).abstract(args.sectors, args.segments)
    if args.format == "json" or args.json:
        text = json.dumps(matrix.to_dict(), indent=2) + "\n"
    else:
        text = f"# params: {json.dumps(matrix.params.to_dict())}\n" + matrix.to_csv()
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    if args.kind == "bee":
        shape, mask = harness.bee_like_shape(args.width, args.height)
        if args.mask:
            save_binary(mask, args.mask)
    else:
        shape = harness.generate_shape(
            args.kind, args.width, args.height, args.seed, count=args.count, density=args.density
        )
    save_binary(shape, args.output)
    _print_summary(args, {"output": args.output, "pixels": shape.count(), "width": shape.width, "height": shape.height})
    return EXIT_OK


def cmd_rotate(args: argparse.Namespace) -> int:
    img = load_binary(args.image)
    rotated = harness.rotate_raster(img, args.theta)
    save_binary(rotated, args.output)
    _print_summary(args, {
        "output": args.output,
        "pixels": rotated.count(),
        "collisions": harness.collision_count(img, args.theta),
    })
    return EXIT_OK


def _parse_region(text: str) -> harness.Rect:
    try:
        x0, y0, x1, y1 = (int(part) for part in text.split(","))
    except ValueError as e:
        raise ConfigError(f"region must be x0,y0,x1,y1, got {text!r}") from e
    return x0, y0, x1, y1


def cmd_noise(args: argparse.Namespace) -> int:
    img = load_binary(args.image)
    region: harness.NoiseRegion = None
    if args.region:
        region = _parse_region(args.region)
    elif args.mask:
        region = load_binary(args.mask)
    noisy = harness.add_noise(img, NoiseSpec(region, args.draws, args.seed))
    save_binary(noisy, args.output)
    _print_summary(args, {"output": args.output, "added": noisy.count() - img.count(), "seed": args.seed})
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    img_a, img_b = load_binary(args.image_a), load_binary(args.image_b)
    result = harness.oracle_rotation(img_a, img_b, step=args.step, workers=args.workers)
    best = result.agreement(result.best_angle)
    if args.json:
        print(json.dumps({"best_angle": result.best_angle, "agreement": best, "table": result.table}))
    else:
        print(f"Best angle: {result.best_angle:.3f}° ({best} agreeing pixels of {img_a.width * img_a.height})")
    return EXIT_OK


def _print_summary(args: argparse.Namespace, summary: dict) -> None:
    if args.json:
        print(json.dumps(summary))
    else:
        print(", ".join(f"{key}: {value}" for key, value in summary.items()))


# ============== Suite ==============

def _suite_shape(suite: config.SuiteConfig) -> tuple[BinaryImage, BinaryImage | None]:
    if suite.shape == "bee":
        return harness.bee_like_shape(suite.width, suite.height)
    return harness.generate_shape(suite.shape, suite.width, suite.height, suite.seed), None


def run_case(
    case: config.SuiteCase,
    shape: BinaryImage,
    mask: BinaryImage | None,
    cfg: SearchConfig,
    seed: int,
    out_dir: Path,
) -> list[dict]:
    """One generate → rotate → noise → estimate pipeline; raises on failure."""
    case_dir = out_dir / safe_name(case.name)
    reports = harness.run_noise_suite(shape, case.theta, case.noise_levels, cfg, region=mask, seed=seed)
    rows = []
    for report in reports:
        name = report.metadata["test"]
        path = _write_report(report, case_dir, name)
        _record_run("suite", report, [case.name, name], path)
        rows.append({
            "case": case.name,
            "test": name,
            "theta": case.theta,
            "draws": report.metadata["draws"],
            "wm3": report.wm3,
            "wv3": report.wv3,
            "error": report.error(),
            "report": str(path),
        })
        if case.max_error is not None and abs(report.error()) > case.max_error:
            raise AssertionError(f"{name}: |error| {abs(report.error()):.3f}° exceeds {case.max_error}°")
    return rows


async def _run_suite(suite: config.SuiteConfig, cfg: SearchConfig, out_dir: Path) -> list[tuple[str, list[dict] | BaseException]]:
    shape, mask = _suite_shape(suite)
    results = await asyncio.gather(
        *(run_sync(run_case, case, shape, mask, cfg, suite.seed, out_dir) for case in suite.cases),
        return_exceptions=True,
    )
    return [(case.name, result) for case, result in zip(suite.cases, results)]


def cmd_suite(args: argparse.Namespace) -> int:
    loaded = resolve_search_config(args)
    suite = loaded.suite
    if args.seed is not None:
        suite = replace(suite, seed=args.seed)
    if not suite.cases:
        logger.info("Suite has no cases, nothing to do")
        _print_summary(args, {"cases": 0, "failed": 0})
        return EXIT_OK

    out_dir = Path(args.out)
    logger.info(f"Suite: {len(suite.cases)} case(s), shape={suite.shape} {suite.width}x{suite.height}, seed={suite.seed}")
    results = asyncio.run(_run_suite(suite, loaded.search, out_dir))

    rows: list[dict] = []
    failed = []
    for name, result in results:
        if isinstance(result, BaseException):
            failed.append({"case": name, "error": f"{type(result).__name__}: {result}"})
            log_error("suite_case", str(result), f"case={name}")
        else:
            rows.extend(result)

    summary = {"seed": suite.seed, "config": loaded.search.to_dict(), "results": rows, "failed": failed}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        for row in rows:
            print(f"{row['case']:>12} {row['test']:>3} draws={row['draws']:<7} "
                  f"WM3={row['wm3']:8.3f} WV3={row['wv3']:8.3f} error={row['error']:+.3f}")
        for failure in failed:
            print(f"{failure['case']:>12} FAILED: {failure['error']}")
    return EXIT_CASE_FAILED if failed else EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "abstract": cmd_abstract,
    "generate": cmd_generate,
    "rotate": cmd_rotate,
    "noise": cmd_noise,
    "suite": cmd_suite,
    "oracle": cmd_oracle,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=str(args.log_level).upper())
    init_dependencies(args.db)
    try:
        return COMMANDS[args.command](args)
    except (ImageLoadError, OSError) as e:
        log_error("io", str(e), f"command={args.command}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ContractViolation) as e:
        log_error("config", str(e), f"command={args.command}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
