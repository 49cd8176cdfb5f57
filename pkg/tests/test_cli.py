from __future__ import annotations

import json
import sqlite3

import numpy as np
import pytest

import cli
import stats
from imagecore import BinaryImage, load_binary, save_binary


@pytest.fixture
def image_a(tmp_path, make_shape):
    return str(save_binary(make_shape(64, seed=2), tmp_path / "a.pbm"))


@pytest.fixture
def blank(tmp_path):
    return str(save_binary(BinaryImage(np.zeros((32, 32), dtype=np.uint8)), tmp_path / "blank.pbm"))


def _json_out(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


def _rows(db: str, query: str) -> list[tuple]:
    with sqlite3.connect(db) as conn:
        return conn.execute(query).fetchall()


def _suite_config(tmp_path, cases: list[dict], **search) -> str:
    path = tmp_path / "suite.json"
    data = {**search, "suite": {"shape": "composite", "width": 64, "height": 64, "seed": 5, "cases": cases}}
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


# ============== estimate ==============

def test_estimate_self(tmp_path, capsys, image_a):
    out = tmp_path / "out"
    assert cli.main(["estimate", image_a, image_a, "--json", "--out", str(out)]) == cli.EXIT_OK
    report = _json_out(capsys)
    assert stats.circular_difference(report["result"]["wm3"], 0.0) == pytest.approx(0.0, abs=1e-6)
    assert report["result"]["upsilon"][0]["score"] == 0
    assert report["metadata"]["image_a"] == image_a
    assert (out / "report.json").exists()
    assert (out / "report_scores" / "scores_l3.csv").exists()


def test_estimate_text_output(tmp_path, capsys, image_a):
    assert cli.main(["estimate", image_a, image_a, "--rho", "45", "--ground-truth", "0", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "WM3:" in text
    assert "Ground truth: 0.000°" in text


def test_estimate_quarter_turn(tmp_path, capsys, make_shape):
    import harness

    shape = make_shape(64, seed=2)
    a = save_binary(shape, tmp_path / "a.pbm")
    b = save_binary(harness.rotate_raster(shape, 90.0), tmp_path / "b.png")
    assert cli.main(["estimate", str(a), str(b), "--json", "--ground-truth", "90", "--out", str(tmp_path)]) == 0
    report = _json_out(capsys)
    assert abs(report["result"]["error"]) <= 360.0 / 64


def test_estimate_with_translation(tmp_path, capsys, image_a):
    code = cli.main([
        "estimate", image_a, image_a, "--json", "--rho", "45",
        "--translation", "--stride", "32", "--out", str(tmp_path),
    ])
    assert code == 0
    report = _json_out(capsys)
    assert report["config"]["translation"] == {"enabled": True, "stride": 32, "signed": False}
    best = report["result"]["upsilon"][0]
    assert (best["tx"], best["ty"]) == (0, 0)


def test_missing_image_is_an_io_error(tmp_path, capsys, image_a):
    assert cli.main(["estimate", image_a, str(tmp_path / "nope.pbm"), "--out", str(tmp_path)]) == cli.EXIT_IO
    assert "error:" in capsys.readouterr().err


def test_malformed_image_is_an_io_error(tmp_path, image_a):
    broken = tmp_path / "broken.pbm"
    broken.write_text("P1\n4 4\n0 1 2", encoding="ascii")
    assert cli.main(["estimate", image_a, str(broken), "--out", str(tmp_path)]) == cli.EXIT_IO


@pytest.mark.parametrize(
    "extra",
    [
        ["--omega", "0"],
        ["--rho", "0"],
        ["--depth", "-1"],
        ["--depth", "8"],
        ["--config", "missing.json"],
    ],
)
def test_bad_config_exits_3(tmp_path, image_a, extra):
    assert cli.main(["estimate", image_a, image_a, "--out", str(tmp_path), *extra]) == cli.EXIT_CONFIG


def test_flags_override_config_file(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"rho": 10, "epsilon": 4}), encoding="utf-8")
    args = cli.build_parser().parse_args(["estimate", "a", "b", "--config", str(cfg_path), "--rho", "45", "--depth", "1"])
    cfg = cli.resolve_search_config(args).search
    assert cfg.rho == 45.0
    assert cfg.epsilon == 4
    assert cfg.similarity.neighborhood_depth == 1


def test_angular_refinement_can_be_switched_off(tmp_path, capsys, image_a):
    args = ["estimate", image_a, image_a, "--json", "--no-angular-refinement", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    report = _json_out(capsys)
    assert report["config"]["angular_refinement"] is False
    assert report["metadata"]["final_level"] == report["metadata"]["grid_level"] == 4


def test_runs_are_recorded(tmp_path, image_a):
    db = str(tmp_path / "runs.db")
    assert cli.main(["estimate", image_a, image_a, "--rho", "45", "--db", db, "--out", str(tmp_path)]) == 0
    assert cli.main(["estimate", image_a, "missing.pbm", "--db", db, "--out", str(tmp_path)]) == cli.EXIT_IO
    runs = _rows(db, "SELECT kind, inputs FROM runs")
    assert len(runs) == 1
    assert runs[0][0] == "estimate"
    assert json.loads(runs[0][1]) == [image_a, image_a]
    assert _rows(db, "SELECT error_type FROM error_log") == [("io",)]


# ============== abstract ==============

def test_abstract_all_zero_image(capsys, blank):
    assert cli.main(["abstract", blank, "-n", "4", "-m", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# params: ")
    assert json.loads(lines[0][len("# params: "):])["n_sectors"] == 4
    assert lines[1:] == ["0,0"] * 4


def test_abstract_single_cell(capsys, image_a):
    assert cli.main(["abstract", image_a, "-n", "1", "-m", "1"]) == 0
    assert capsys.readouterr().out.splitlines()[1:] == ["1"]


def test_abstract_json_to_file(tmp_path, image_a):
    output = tmp_path / "gamma" / "g.json"
    assert cli.main(["abstract", image_a, "--format", "json", "--output", str(output)]) == 0
    data = json.loads(output.read_text())
    assert np.array(data["values"]).shape == (8, 8)
    assert np.mean(data["values"]) == pytest.approx(1.0)


def test_abstract_rejects_empty_grid(image_a):
    assert cli.main(["abstract", image_a, "-n", "0"]) == cli.EXIT_CONFIG


# ============== generate / rotate / noise ==============

def test_generate(tmp_path, capsys):
    output = tmp_path / "shape.pbm"
    assert cli.main(["generate", "composite", str(output), "--width", "80", "--height", "60", "--seed", "3", "--json"]) == 0
    summary = _json_out(capsys)
    img = load_binary(output)
    assert (img.width, img.height) == (80, 60)
    assert summary["pixels"] == img.count() > 0


def test_generate_bee_with_mask(tmp_path):
    output, mask = tmp_path / "bee.png", tmp_path / "body.pbm"
    assert cli.main(["generate", "bee", str(output), "--width", "200", "--height", "200", "--mask", str(mask)]) == 0
    bee, body = load_binary(output), load_binary(mask)
    assert 0 < body.count() < bee.count()


def test_generate_rejects_bad_params(tmp_path):
    assert cli.main(["generate", "noise", str(tmp_path / "x.pbm"), "--density", "2"]) == cli.EXIT_CONFIG


def test_rotate(tmp_path, capsys, image_a):
    output = tmp_path / "r.pbm"
    assert cli.main(["rotate", image_a, str(output), "--theta", "90", "--json"]) == 0
    summary = _json_out(capsys)
    assert summary["collisions"] == 0
    assert load_binary(output).count() == load_binary(image_a).count() == summary["pixels"]


def test_noise_in_region(tmp_path, capsys, blank):
    output = tmp_path / "n.pbm"
    assert cli.main(["noise", blank, str(output), "--draws", "50", "--seed", "1", "--region", "0,0,8,8", "--json"]) == 0
    summary = _json_out(capsys)
    noisy = load_binary(output)
    assert noisy.count() == summary["added"] > 0
    assert noisy.bits[:8, :8].sum() == noisy.count()


def test_noise_with_mask(tmp_path, blank):
    mask_bits = np.zeros((32, 32), dtype=np.uint8)
    mask_bits[10:20, 10:20] = 1
    mask = save_binary(BinaryImage(mask_bits), tmp_path / "mask.pbm")
    output = tmp_path / "n.pbm"
    assert cli.main(["noise", blank, str(output), "--draws", "40", "--mask", str(mask)]) == 0
    assert not (load_binary(output).bits & (1 - mask_bits)).any()


@pytest.mark.parametrize("region", ["1,2,3", "a,b,c,d", "0,0,99,99"])
def test_noise_bad_region(tmp_path, blank, region):
    assert cli.main(["noise", blank, str(tmp_path / "n.pbm"), "--draws", "5", "--region", region]) == cli.EXIT_CONFIG


# ============== suite ==============

def test_empty_suite(tmp_path, capsys):
    cfg = _suite_config(tmp_path, [])
    assert cli.main(["suite", "--config", cfg, "--out", str(tmp_path / "suite"), "--json"]) == cli.EXIT_OK
    assert _json_out(capsys) == {"cases": 0, "failed": 0}


def test_suite_writes_reports(tmp_path, capsys):
    cfg = _suite_config(tmp_path, [{"name": "quarter", "theta": 90, "noise_levels": [0, 50], "max_error": 90}], rho=45)
    out = tmp_path / "suite"
    assert cli.main(["suite", "--config", cfg, "--out", str(out), "--json"]) == cli.EXIT_OK
    summary = _json_out(capsys)
    assert [row["test"] for row in summary["results"]] == ["T1", "T2"]
    assert summary["seed"] == 5
    assert summary["failed"] == []
    assert (out / "quarter" / "T1.json").exists()
    assert (out / "quarter" / "T2_scores" / "scores_l3.csv").exists()
    assert json.loads((out / "summary.json").read_text()) == summary


def test_suite_seed_override(tmp_path, capsys):
    cfg = _suite_config(tmp_path, [{"name": "c", "theta": 0, "noise_levels": [10]}], rho=45)
    assert cli.main(["suite", "--config", cfg, "--seed", "99", "--out", str(tmp_path / "s"), "--json"]) == 0
    assert _json_out(capsys)["seed"] == 99


def test_failing_case_exits_1(tmp_path, capsys):
    db = str(tmp_path / "runs.db")
    cfg = _suite_config(
        tmp_path,
        [
            {"name": "ok", "theta": 90, "noise_levels": [0]},
            {"name": "strict", "theta": 37, "noise_levels": [0], "max_error": 0.0},
        ],
        rho=45,
    )
    assert cli.main(["suite", "--config", cfg, "--out", str(tmp_path / "s"), "--db", db]) == cli.EXIT_CASE_FAILED
    text = capsys.readouterr().out
    assert "strict FAILED" in text
    assert "ok" in text
    assert _rows(db, "SELECT COUNT(*) FROM runs WHERE kind = 'suite'") == [(2,)]
    assert _rows(db, "SELECT context FROM error_log ORDER BY id DESC LIMIT 1") == [("case=strict",)]


# ============== oracle ==============

def test_oracle(tmp_path, capsys, make_shape):
    import harness

    shape = make_shape(48, seed=4)
    a = save_binary(shape, tmp_path / "a.pbm")
    b = save_binary(harness.rotate_raster(shape, 60.0), tmp_path / "b.pbm")
    assert cli.main(["oracle", str(a), str(b), "--step", "5", "--workers", "2", "--json"]) == 0
    result = _json_out(capsys)
    assert result["best_angle"] == 60.0
    assert result["agreement"] == 48 * 48
    assert len(result["table"]) == 72
