import json

import pytest

from finslab import scenario as scn
from finslab.cli import main

SMALL = {
    "version": 1,
    "metric": {"catalog": "sphere", "n": 2},
    "checks": ["homogeneity", "metric_identities", "affine"],
    "sampling": {"seed": 3, "count": 5},
}

USER = {
    "version": 1,
    "name": "user metric",
    "metric": {"expression": "(sqrt(y0^2 + y1^2) + b*y0)^2", "n": 2,
               "params": {"b": 0.25}, "box": [[-1, 1], [-1, 1]]},
    "connection": {"kind": "metric"},
    "checks": ["homogeneity", {"id": "affine", "tol": 1e-8}],
    "sampling": {"count": 4},
}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_parse_config_collects_every_violation():
    bad = {"version": 1, "metric": {"catalog": "minkowsky"},
           "checks": [{"id": "affine", "tol": -1}], "sampling": {"count": 0}}
    with pytest.raises(scn.ConfigError) as info:
        scn.parse_config(json.dumps(bad))
    paths = {e["path"] for e in info.value.errors}
    assert "$.checks[0].tol" in paths
    assert "$.sampling.count" in paths
    assert any("minkowski" in e.get("suggestions", []) for e in info.value.errors)


def test_parse_config_rejects_non_json():
    with pytest.raises(scn.ConfigError):
        scn.parse_config("{version: 1")


def test_user_metric_campaign_passes():
    rep = scn.run_campaign(scn.parse_config(json.dumps(USER)))
    assert rep.exit_code == scn.EXIT_PASS
    assert not scn.validate_report(rep.document)


def test_broken_homogeneity_fails_and_names_the_check():
    doc = dict(USER, metric=dict(USER["metric"], expression="y0^2 + y1^2 + y0"),
               checks=["homogeneity"])
    rep = scn.run_campaign(scn.parse_config(json.dumps(doc)))
    assert rep.exit_code == scn.EXIT_FAIL
    assert rep.document["scenarios"][0]["checks"][0]["verdict"] == "fail"


def test_empty_check_list_warns():
    rep = scn.run_campaign(scn.parse_config(json.dumps(dict(SMALL, checks=[]))))
    assert rep.exit_code == scn.EXIT_PASS
    assert "no checks selected" in rep.document["warnings"]


def test_hash_is_deterministic_and_ignores_metadata():
    cfg = scn.parse_config(json.dumps(SMALL))
    a, b = scn.run_campaign(cfg), scn.run_campaign(cfg)
    assert a.hash == b.hash
    doc = dict(a.document, metadata={"anything": 1})
    assert scn.report_hash(doc) == a.hash
    c = scn.run_campaign(cfg, seed=4)
    assert c.hash != a.hash


def test_tol_scale_is_echoed():
    rep = scn.run_campaign(scn.parse_config(json.dumps(SMALL)), tol_scale=10.0)
    chk = rep.document["scenarios"][0]["checks"][2]
    assert chk["reports"][0]["tol"] == pytest.approx(1e-7)


def test_main_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, SMALL)
    out = tmp_path / "rep.json"
    assert main(["check", good, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == "finslab.report/1" and rep["verdict"] == "pass"
    assert "verdict: pass" in capsys.readouterr().err

    assert main(["check", str(tmp_path / "missing.json")]) == 2
    bad = _write(tmp_path, {"version": 2}, "bad.json")
    assert main(["check", bad]) == 2
    assert main(["check", good, "--tol-scale", "0"]) == 2

    broken = dict(USER, metric=dict(USER["metric"], expression="y0^2 + y1^2 + y0"),
                  checks=["homogeneity"])
    broken = _write(tmp_path, broken, "broken.json")
    assert main(["check", broken, "--out", str(tmp_path / "b.json")]) == 1
    assert "[ fail] user metric: homogeneity" in capsys.readouterr().err


def test_evaluation_error_gives_exit_3(tmp_path):
    # metric degenerate everywhere: every check errors out
    doc = dict(USER, metric=dict(USER["metric"], expression="y0^2"), checks=["affine"])
    assert main(["check", _write(tmp_path, doc), "--out", str(tmp_path / "r.json")]) == 3


def test_csv_report_and_gap_table(tmp_path):
    cfg = dict(SMALL, checks=["divergence"], sampling={"count": 2})
    out = tmp_path / "rep.csv"
    assert main(["check", _write(tmp_path, cfg), "--format", "csv", "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0]
    assert header == "scenario,check,equation,x,y,residual,tol,verdict"
    gaps = (tmp_path / "rep.gaps.csv").read_text().splitlines()
    assert gaps[0] == "check_id,x,y,formula,oracle,gap"


def test_geodesic_subcommand_csv(tmp_path):
    cfg = dict(SMALL, checks=[], geodesic={"x0": [1.0, 0.0], "y0": [0.0, 1.0],
                                           "t_end": 1.0, "samples": 5})
    out = tmp_path / "geo.csv"
    assert main(["geodesic", _write(tmp_path, cfg), "--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x1,x2,y1,y2,L"
    assert len(lines) == 6


def test_decompose_subcommand_on_demo(tmp_path):
    out = tmp_path / "dec.json"
    code = main(["decompose", "demo:paper-suite", "--samples", "4", "--out", str(out)])
    rep = json.loads(out.read_text())
    verdicts = {s["name"]: s["verdict"] for s in rep["scenarios"]}
    assert verdicts["minkowski-solution"] == "pass"
    assert verdicts["randers-generic"] == "fail"
    assert code == 1


def test_unknown_demo_suggests(capsys):
    assert main(["check", "demo:paper-suit"]) == 2
    assert "paper-suite" in capsys.readouterr().err


def test_report_schema_command(capsys):
    assert main(["report-schema"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["properties"]["schema"]["const"] == "finslab.report/1"
