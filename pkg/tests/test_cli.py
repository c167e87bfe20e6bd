import json
import subprocess
import sys

import pytest

from pshlab import cli
from pshlab.form_calculus import read_hmaf


def test_scenario_list(capsys):
    assert cli.run(["scenario", "list"]) == 0
    assert capsys.readouterr().out.split() == cli.SCENARIO_NAMES


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["mass", "survey", "--grid", "12"],
    ["compare", "check", "--lambda", "1.5"],
    ["envelope", "run", "--obstacle", "/no/such/file.hmaf"],
    ["envelope", "run", "--scenario", "nef_degenerate"],
    ["scenario", "build", "--scenario", "guan_li_closed", "--param", "amplitude=2"],
    ["mass", "survey", "--js", "5"],
])
def test_usage_errors(argv, tmp_path, capsys):
    assert cli.run(argv + ["--out", str(tmp_path)] if argv[0] != "bogus" else argv) == 1
    assert "usage error" in capsys.readouterr().err


def test_envelope_run_outputs(tmp_path):
    rc = cli.run(["envelope", "run", "--scenario", "flat_kahler", "--n", "1", "--grid", "32",
                  "--obstacle", "bump", "--beta-max", "1024", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "envelope_flat_kahler_n1_r32_bump.json").read_text())
    for key in ("scenario", "op", "inputs", "metrics", "tolerances", "seed", "commit", "config",
                "tool_version", "schema_version"):
        assert key in rep
    assert rep["metrics"]["sup_violation"] <= rep["tolerances"]["sup_violation"]
    phi = read_hmaf(tmp_path / "envelope_flat_kahler_n1_r32_bump_phi.hmaf")
    assert phi.grid.res == 32
    assert (tmp_path / "envelope_flat_kahler_n1_r32_bump_beta.csv").read_text().startswith("beta,")
    # the written phi round-trips as an obstacle file
    rc = cli.run(["envelope", "run", "--scenario", "flat_kahler", "--n", "1", "--grid", "32",
                  "--obstacle", str(tmp_path / "envelope_flat_kahler_n1_r32_bump_phi.hmaf"),
                  "--beta-max", "1024", "--out", str(tmp_path / "again")])
    assert rc == 0


def test_contract_violation_exit_code(tmp_path, capsys, monkeypatch):
    from pshlab import volume_bounds
    monkeypatch.setitem(volume_bounds.V_M_THRESHOLDS, ("nonclosed_hermitian", 2, 1.0), (5.0, 6.0))
    rc = cli.run(["mass", "survey", "--scenario", "nonclosed_hermitian", "--family-size", "3",
                  "--m-clip", "1", "--out", str(tmp_path)])
    assert rc == 2
    assert "v_M_lower_margin" in capsys.readouterr().err
    rep = json.loads((tmp_path / "mass_nonclosed_hermitian_n2_r16.json").read_text())
    assert [c["metric"] for c in rep["contracts"] if not c["passed"]] == ["v_M_lower_margin"]


def test_mass_survey_csv_and_env_outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.run(["mass", "survey", "--scenario", "guan_li_closed", "--family-size", "3"]) == 0
    lines = (tmp_path / "mass_guan_li_closed_n2_r16_samples.csv").read_text().splitlines()
    assert lines[0] == "sample,mass_j1,mass_j2" and len(lines) == 4


def test_json_is_deterministic_and_clean(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.run(["compare", "check", "--pairs", "1", "--trials", "10", "--out", str(d)]) == 0
    name = "compare_flat_kahler_n2_r16.json"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / name).read_text())
    assert rep["metrics"]["s_max"] == "inf"


def test_figures_flag(tmp_path):
    pytest.importorskip("matplotlib")
    rc = cli.run(["--figures", "mass", "survey", "--scenario", "nef_degenerate", "--family-size", "2",
                  "--eps-ladder", "0.1,0.05", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "mass_nef_degenerate_n2_r16_ladder.png").stat().st_size > 0


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "pshlab", "scenario", "list"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "flat_kahler" in out.stdout
