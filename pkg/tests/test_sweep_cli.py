import csv
import json
import math
import subprocess
import sys

import pytest

from jostkit.cli import main, parse_potential, parse_weight
from jostkit.errors import SpecError
from jostkit.sweep import (
    CSV_COLUMNS, SweepSpec, evaluate_row, parse_eps, repro, run_audit, run_sweep, theorem_bounds,
)

BARRIER = {"name": "square_barrier", "params": [1, 1]}


def small_spec(**kw):
    cfg = {"potential": BARRIER, "theorem": "thm3", "weight": {"kind": "thm1"}, "h": [1.0, 0.5], "E": [1.0, 2.0],
           "eps": ["frac:0.1"]}
    cfg.update(kw)
    return SweepSpec.from_mapping(cfg)


def test_parse_eps():
    assert parse_eps("frac:0.25", 2.0) == 0.5
    assert parse_eps(0.1, 2.0) == 0.1
    with pytest.raises(SpecError):
        parse_eps("frac:0.6", 1.0)
    with pytest.raises(SpecError):
        parse_eps("frac:x", 1.0)


def test_theorem_bounds():
    assert theorem_bounds("thm3", 0.5, 4.0, 0.1) == (8.0, pytest.approx(math.nan, nan_ok=True))
    b, alt = theorem_bounds("thm2", 0.5, 2.0, 0.0, R=1.0, delta=1.0)
    assert b == pytest.approx(8 / (2 * math.sqrt(2) * 0.5))
    assert alt == pytest.approx(2 / (0.5 * 2 * math.sqrt(2)))
    assert math.isnan(theorem_bounds("thm2", 0.5, 2.0, 0.1)[1])
    assert theorem_bounds("thm1", 1.0, 4.0, 0.1, int_m=2.0)[0] == pytest.approx(math.exp(2.0))


@pytest.mark.parametrize("cfg", [
    {"potential": BARRIER, "eps": ["frac:0.6"]},
    {"potential": BARRIER, "E": [1.0], "eps": [0.7]},
    {"potential": BARRIER, "eps": [0.0], "backend": "matrix"},
    {"potential": {"name": "wvn_like"}, "backend": "kernel"},
    {"potential": BARRIER, "theorem": "thm2", "weight": {"kind": "thm2", "R": 0.5}},
    {"potential": BARRIER, "colour": "blue"},
    {"theorem": "thm3"},
    {"potential": BARRIER, "h": "one"},
    {"potential": BARRIER, "tail_ref": "nowhere"},
])
def test_spec_validation(cfg):
    with pytest.raises(SpecError):
        SweepSpec.from_mapping(cfg)


def test_sweep_rows_and_outputs(tmp_path):
    rep = run_sweep(small_spec(out=str(tmp_path)))
    assert rep.exit_code == 0
    assert len(rep.rows) == 4
    assert [(r["h"], r["E"]) for r in rep.rows] == [(1.0, 1.0), (1.0, 2.0), (0.5, 1.0), (0.5, 2.0)]
    for r in rep.rows:
        assert r["pass"] == (r["computed_norm"] <= 1.05 * r["theorem_bound"])
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert "e-" in lines[1] or "e+" in lines[1]
    payload = json.loads((tmp_path / "report.json").read_text())
    prov = payload["provenance"]
    assert prov["spec"]["potential"]["name"] == "square_barrier"
    assert "version" in prov and prov["spec"]["backend"] == "kernel"
    assert payload["summary"]["max_ratio"] == pytest.approx(rep.max_ratio)


def test_determinism_and_pool(tmp_path):
    run_sweep(small_spec(out=str(tmp_path / "a")))
    run_sweep(small_spec(out=str(tmp_path / "b")))
    run_sweep(small_spec(out=str(tmp_path / "c"), jobs=2))
    a = (tmp_path / "a" / "report.csv").read_bytes()
    assert a == (tmp_path / "b" / "report.csv").read_bytes()
    assert a == (tmp_path / "c" / "report.csv").read_bytes()


def test_repro_row(tmp_path):
    run_sweep(small_spec(out=str(tmp_path), backend="matrix"))
    stored, fresh, same = repro(tmp_path, 2)
    assert same
    assert stored["computed_norm"] == fresh["computed_norm"]
    with pytest.raises(SpecError):
        repro(tmp_path, 99)


def test_free_sweep_with_gaussian_envelope():
    spec = SweepSpec.from_mapping({
        "potential": {"name": "free", "envelope": {"kind": "catalog", "name": "gaussian_truncated"}},
        "theorem": "thm1", "h": [1.0, 0.5, 0.2], "E": [1.0, 4.0], "eps": ["frac:0.1"]})
    rep = run_sweep(spec)
    assert rep.exit_code == 0
    assert all(r["pass"] for r in rep.rows)


def test_thm2_sweep_eps_zero():
    spec = SweepSpec.from_mapping({"potential": BARRIER, "theorem": "thm2", "weight": {"kind": "thm2", "R": 1.0,
                                   "delta": 1.0}, "h": [1.0, 0.5], "E": [2.0], "eps": [0.0],
                                   "tail_ref": "bound", "tail_rtol": 1e-2})
    rep = run_sweep(spec)
    assert rep.exit_code == 0
    for r in rep.rows:
        assert r["computed_norm"] <= 1.05 * r["alt_bound"] <= 1.05 * r["theorem_bound"]


def test_broken_weight_refused():
    with pytest.raises(SpecError):
        run_sweep(small_spec(weight={"kind": "constant", "value": 1.0}))


def test_row_error_is_recorded(monkeypatch):
    from jostkit import sweep as sw
    from jostkit.errors import ConvergenceError

    def boom(*a, **k):
        raise ConvergenceError("stalled")

    monkeypatch.setattr(sw, "estimate_norm", boom)
    row = evaluate_row(small_spec(), 0)
    assert row["status"] == "error" and "stalled" in row["message"]
    rep = sw.SweepReport([row], small_spec())
    assert rep.exit_code == 3


def test_violation_exit_code(monkeypatch):
    from jostkit import sweep as sw
    rows = [dict(evaluate_row(small_spec(), 0), computed_norm=1e9, ratio=1e9, pass_=False)]
    rows[0]["pass"] = False
    assert sw.SweepReport(rows, small_spec()).exit_code == 1


def test_audit_batch_free_and_barrier(tmp_path):
    for name in ("free", "square_barrier"):
        pot = {"name": name}
        if name == "free":
            pot["envelope"] = {"kind": "indicator", "params": [1.0]}
        spec = SweepSpec.from_mapping({"potential": pot, "h": [1.0], "E": [1.0], "eps": ["frac:0.1"],
                                       "audit": {"test_functions": [{"kind": "gaussian", "center": 2.5},
                                                                    {"kind": "plateau", "center": 3.0},
                                                                    {"kind": "packet", "center": 2.5}]},
                                       "out": str(tmp_path / name)})
        rep = run_audit(spec)
        assert len(rep.rows) == 6
        assert rep.exit_code == 0
        assert all(r["apriori_ratio"] <= 1 for r in rep.rows)
    stored, fresh, same = repro(tmp_path / "free", 4)
    assert same


def test_parse_helpers():
    assert parse_potential("square_barrier:2,0.5") == {"name": "square_barrier", "params": [2.0, 0.5]}
    assert parse_weight("thm2:R=1,delta=2") == {"kind": "thm2", "R": 1.0, "delta": 2.0}
    with pytest.raises(SpecError):
        parse_weight("thm2:R")


def run_cli(*args):
    return main(list(args))


def test_cli_exit_codes(tmp_path, capsys):
    assert run_cli("jost", "--potential", "square_barrier", "--h", "0.5", "--E", "2") == 0
    assert run_cli("kernel", "--potential", "square_barrier", "--h", "0.5", "--E", "2",
                   "--out", str(tmp_path / "k")) == 0
    assert (tmp_path / "k" / "kernel.csv").exists()
    assert run_cli("weights", "--potential", "square_barrier", "--weight", "thm1", "--h", "0.5", "--E", "2",
                   "--out", str(tmp_path / "w")) == 0
    assert run_cli("weights", "--potential", "square_barrier", "--weight", "constant:value=1",
                   "--h", "0.5", "--E", "2") == 1
    assert run_cli("norm", "--potential", "square_barrier", "--theorem", "thm3", "--h", "0.5", "--E", "2",
                   "--eps", "frac:0.1") == 0
    assert run_cli("sweep", "--potential", "square_barrier", "--weight", "constant:value=1") == 2
    assert run_cli("sweep", "--potential", "square_barrier", "--eps", "frac:0.9") == 2
    assert run_cli("sweep", "--potential", "no_such_potential") == 2
    with pytest.raises(SystemExit) as ex:
        run_cli("sweep", "--backend", "lanczos")
    assert ex.value.code == 2
    with pytest.raises(SystemExit) as ex:
        run_cli("frobnicate")
    assert ex.value.code == 2


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("potential: {name: square_barrier, params: [1, 1]}\ntheorem: thm3\n"
                   "h: [1.0]\nE: [1.0, 2.0]\neps: ['frac:0.1']\n")
    out = tmp_path / "o"
    assert run_cli("sweep", "--config", str(cfg), "--h", "0.5", "--out", str(out)) == 0
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert [float(r["h"]) for r in rows] == [0.5, 0.5]
    assert run_cli("repro", str(out), "--row", "1") == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text("potential: [unclosed\n")
    assert run_cli("sweep", "--config", str(bad)) == 2


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "jostkit", "jost", "--potential", "free", "--h", "1", "--E", "1"],
                       capture_output=True, text=True)
    assert p.returncode == 0
    assert json.loads(p.stdout)["A"] == [1.0, 0.0]
