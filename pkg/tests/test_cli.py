import json
import re

import pytest
from click.testing import CliRunner

from gmt.cli import RunConfig, RunReport, main, replay, run, scene_reference
from gmt.errors import InvalidInput


def _invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_check_ok_and_violation_codes(tmp_path):
    ok = _invoke("check", "two-ball", "--scene", "catalog:halfplane", "--C", 3, "--samples", 16,
                 "--out", tmp_path / "a.json")
    assert ok.exit_code == 0
    bad = _invoke("check", "two-ball", "--scene", "catalog:four_corner_cantor:depth=4",
                  "--C", 10, "--samples", 16, "--out", tmp_path / "b.json")
    assert bad.exit_code == 1
    rep = json.loads((tmp_path / "b.json").read_text())
    assert rep["status"]["kind"] == "HypothesisViolated"


def test_porosity_resolution_code(tmp_path):
    tab = tmp_path / "v.json"
    assert _invoke("visibility", "--scene", "catalog:halfplane", "--n", 16,
                   "--out", tab).exit_code == 0
    res = _invoke("porosity", "--table", tab, "--eta", 0.05, "--out", tmp_path / "p.json")
    assert res.exit_code == 2
    relaxed = _invoke("porosity", "--table", tab, "--eta", 0.05, "--no-resolution-check",
                      "--out", tmp_path / "q.json")
    assert relaxed.exit_code == 0


def test_missing_scene_file_is_invalid_input(tmp_path):
    res = _invoke("check", "two-ball", "--scene", tmp_path / "nope.json")
    assert res.exit_code == 3


def test_invalid_config_rejected():
    rep = run(RunConfig("check", "catalog:halfplane", {"kind": "two-ball"}, {"C": 1.0}), write=False)
    assert rep.exit_code == 3 and "C = 1.0" in rep.status["error"]
    with pytest.raises(InvalidInput):
        RunConfig.from_dict({"command": "check", "bogus": 1})


def test_scene_reference_parsing():
    ref = scene_reference("catalog:koch_snowflake:depth=3")
    assert ref == {"catalog": {"name": "koch_snowflake", "params": {"depth": 3}}}
    with pytest.raises(InvalidInput):
        scene_reference("catalog:koch_snowflake:depth")


def _cone_report(tmp_path):
    out = tmp_path / "c.json"
    res = _invoke("cone-verify", "--scene", "catalog:halfplane", "--apex", "0,0", "--axis", "0,1",
                  "--alpha", 0.3, "--t", 0.5, "--out", out, "--svg", tmp_path / "c.svg")
    assert res.exit_code == 0
    return out


def test_replay_identical(tmp_path):
    out = _cone_report(tmp_path)
    _, summary = replay(out)
    assert summary["identical"], summary["differences"]
    res = _invoke("replay", out)
    assert res.exit_code == 0 and json.loads(res.output)["identical"]


def test_replay_with_finer_grid_differs(tmp_path):
    out = tmp_path / "v.json"
    _invoke("visibility", "--scene", "catalog:halfplane", "--n", 16, "--out", out)
    _, summary = replay(out, {"grid_n": 32})
    assert not summary["identical"] and summary["count"] > 0


def test_corrupted_report(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _invoke("replay", bad).exit_code == 3
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps({"version": "0.1.0"}))
    assert _invoke("replay", partial).exit_code == 3
    with pytest.raises(InvalidInput):
        RunReport.from_json("[1, 2")


def test_svg_ids_round_trip(tmp_path):
    out = _cone_report(tmp_path)
    rep = json.loads(out.read_text())
    svg = (tmp_path / "c.svg").read_text()
    ids = set(re.findall(r'id="([^"]+)"', svg))
    assert set(rep["results"]["svg_ids"]) <= ids
    for path in rep["results"]["svg_ids"].values():
        root, *rest = path.split(".")
        node = rep["results"] if root == "results" else None
        if node is None:
            continue
        for part in rest:
            m = re.fullmatch(r"(\w+)(?:\[(\d+)\])?", part)
            node = node[m.group(1)]
            if m.group(2) is not None:
                node = node[int(m.group(2))]
        assert node is not None


def test_reports_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        _invoke("visibility", "--scene", "catalog:disk", "--n", 16, "--out", p)
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    ra["config"].pop("outputs"), rb["config"].pop("outputs")
    assert ra["results"] == rb["results"] and ra["config"] == rb["config"]


def test_csv_written(tmp_path):
    csv = tmp_path / "v.csv"
    _invoke("visibility", "--scene", "catalog:halfplane", "--n", 16, "--out", tmp_path / "v.json",
            "--csv", csv)
    head = csv.read_text().splitlines()[0].split(",")
    assert head[0] == "index" and "weight" in head
