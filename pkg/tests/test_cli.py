import csv
import json
from pathlib import Path

import pytest

from timebin.cli import (
    BUDGET_COLUMNS,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    SCAN_COLUMNS,
    SWEEP_D_COLUMNS,
    SWEEP_MU_COLUMNS,
    ScenarioError,
    main,
    parse_scenario_text,
)
from timebin.records import HISTOGRAM_COLUMNS, RECORD_COLUMNS

GOLDEN = Path(__file__).parent / "golden"


def _write(tmp_path, text, name="scenario.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --- parsing ---------------------------------------------------------------------


def test_minimal_scan_gets_defaults():
    scn = parse_scenario_text("kind = scan\n")
    assert scn.kind == "scan"
    assert scn["d"] == 20
    assert scn["mu"] == 0.001
    assert scn["n_phases"] == 12
    assert scn["window"] == 1.0
    assert scn["detectors"] == "ideal"


def test_ranges_comments_and_literals():
    scn = parse_scenario_text(
        "# sweep\nkind = sweep-d   # inline\nd_values = 1..4\nrecords = false\ntrigger_width = none\n"
    )
    assert scn["d_values"] == [1, 2, 3, 4]
    assert scn["records"] is False
    assert scn["trigger_width"] is None


def test_d_zero_names_constraint():
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text("kind = scan\nd = 0\n")
    err = info.value
    assert err.kind == "constraint"
    assert err.key == "d" and err.line == 2
    assert "d >= 1" in err.message
    assert json.loads(err.diagnostic())["error"] == "constraint"


def test_sweep_with_fixed_d_conflicts():
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text("kind = sweep-d\nd_values = 1..5\nd = 4\n")
    assert info.value.kind == "conflict"
    assert info.value.line == 3


@pytest.mark.parametrize(
    "text",
    ["kind = sweep-mu\nmu = 0.1\n", "imbalance_db = 1.5\nt_s = 0.7\n", "t_s = 0.7\n", "kind = scan\nmu_values = [0.1]\n"],
)
def test_other_conflicts(text):
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text(text)
    assert info.value.kind == "conflict"


def test_unknown_key_rejected_with_line():
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text("kind = scan\n\nn_train = 10\n")
    assert info.value.kind == "unknown_key"
    assert info.value.key == "n_train"
    assert info.value.line == 3


@pytest.mark.parametrize("text", ["kind scan\n", "d = [1, 2\n", "d = 3\nd = 4\n", "d =\n"])
def test_syntax_errors(text):
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text(text)
    assert info.value.kind == "syntax"


@pytest.mark.parametrize(
    "text,key",
    [
        ("window = 9.0\n", "window"),
        ("seed = -1\n", "seed"),
        ("residual_visibility = 1.2\n", "residual_visibility"),
        ("t_s = 0.9\nt_l = 0.9\n", None),
        ("detectors = bench\n", "detectors"),
        ("kind = nonsense\n", "kind"),
    ],
)
def test_constraint_violations(text, key):
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text(text)
    assert info.value.kind == "constraint"
    if key is not None:
        assert info.value.key == key


# --- command line ----------------------------------------------------------------


def test_exit_code_config_error(tmp_path, capsys):
    path = _write(tmp_path, "d = 0\n")
    assert main(["--scenario", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    line = capsys.readouterr().err.strip()
    assert len(line.splitlines()) == 1
    assert json.loads(line)["key"] == "d"


def test_missing_scenario_file(tmp_path, capsys):
    assert main(["--scenario", str(tmp_path / "none.txt")]) == EXIT_CONFIG
    assert json.loads(capsys.readouterr().err)["error"] == "io"


def test_exit_code_runtime_error(tmp_path, capsys):
    # no pairs at all: the fringe fit has nothing to work with
    path = _write(tmp_path, "kind = scan\nd = 3\nmu = 0\nn_trains = 100\n")
    assert main(["--scenario", path, "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_RUNTIME
    diag = json.loads(capsys.readouterr().err.strip())
    assert diag["error"] == "runtime"


def test_budget_scenario(tmp_path, capsys):
    path = _write(tmp_path, "kind = budget\nv_multipair = 0.97\nv_misalign = 0.96\nv_residual = 0.99\n")
    out = tmp_path / "o"
    assert main(["--scenario", path, "--out", str(out)]) == EXIT_OK
    assert "v_total=0.9219" in capsys.readouterr().out
    rows = _rows(out / "budget.csv")
    assert tuple(rows[0]) == BUDGET_COLUMNS
    assert float(rows[0]["v_total"]) == pytest.approx(0.921888, abs=1e-9)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outputs"] == ["budget.csv"]
    assert {"seed", "config", "versions", "wall_time_s"} <= set(manifest)


def test_budget_from_physical_parameters(tmp_path):
    path = _write(tmp_path, "kind = budget\nd = 20\nmu = 0.025\n")
    out = tmp_path / "o"
    assert main(["--scenario", path, "--out", str(out), "--quiet"]) == EXIT_OK
    row = _rows(out / "budget.csv")[0]
    assert float(row["v_total"]) == pytest.approx(0.95 / 1.04875, abs=1e-9)


SCAN = "kind = scan\nd = 4\nmu = 0.05\nn_trains = 20000\nn_phases = 6\nseed = 5\n"


def test_scan_reruns_are_byte_identical(tmp_path):
    path = _write(tmp_path, SCAN)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--scenario", path, "--out", str(a), "--quiet"]) == EXIT_OK
    assert main(["--scenario", path, "--out", str(b), "--quiet"]) == EXIT_OK
    for name in ("scan.csv", "histogram.csv", "fit.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_workers_do_not_change_outputs(tmp_path):
    one = _write(tmp_path, SCAN.replace("n_trains = 20000", "n_trains = 140000"), "one.txt")
    three = _write(tmp_path, SCAN.replace("n_trains = 20000", "n_trains = 140000") + "workers = 3\n", "three.txt")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--scenario", one, "--out", str(a), "--quiet"]) == EXIT_OK
    assert main(["--scenario", three, "--out", str(b), "--quiet"]) == EXIT_OK
    assert (a / "scan.csv").read_bytes() == (b / "scan.csv").read_bytes()


def test_flag_overrides_win_and_are_echoed(tmp_path):
    path = _write(tmp_path, SCAN)
    out = tmp_path / "o"
    assert main(["--scenario", path, "--out", str(out), "--seed", "99", "--trains", "5000", "--quiet"]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 99
    assert manifest["overrides"] == {"seed": 99, "n_trains": 5000}
    assert {int(r["exposure"]) for r in _rows(out / "scan.csv")} == {5000}


def test_run_with_records(tmp_path):
    path = _write(tmp_path, "kind = run\nd = 3\nmu = 0.1\nn_trains = 2000\nrecords = true\n")
    out = tmp_path / "o"
    assert main(["--scenario", path, "--out", str(out), "--quiet"]) == EXIT_OK
    records = _rows(out / "records.csv")
    hist = _rows(out / "histogram.csv")
    assert len(records) == sum(int(r["count"]) for r in hist)
    assert {r["origin_tag"] for r in records} <= set(HISTOGRAM_COLUMNS[2:])


@pytest.mark.parametrize(
    "name,columns", [("scan", SCAN_COLUMNS), ("sweep_d", SWEEP_D_COLUMNS), ("sweep_mu", SWEEP_MU_COLUMNS),
                     ("budget", BUDGET_COLUMNS), ("histogram", HISTOGRAM_COLUMNS), ("records", RECORD_COLUMNS)],
)
def test_schemas_match_golden_headers(name, columns):
    assert (GOLDEN / f"{name}.header").read_text(encoding="utf-8").strip() == ",".join(columns)


def test_output_headers_match_golden(tmp_path):
    path = _write(tmp_path, SCAN)
    out = tmp_path / "o"
    assert main(["--scenario", path, "--out", str(out), "--quiet"]) == EXIT_OK
    for name in ("scan", "histogram"):
        first = (out / f"{name}.csv").read_text(encoding="utf-8").splitlines()[0]
        assert first == (GOLDEN / f"{name}.header").read_text(encoding="utf-8").strip()


def test_small_dimension_sweep(tmp_path):
    path = _write(tmp_path, "kind = sweep-d\nd_values = [2, 5, 10]\nmu = 0.002\nn_trains = 200000\nn_phases = 6\n")
    out = tmp_path / "o"
    assert main(["--scenario", path, "--out", str(out), "--quiet"]) == EXIT_OK
    first = (out / "sweep_d.csv").read_text(encoding="utf-8").splitlines()[0]
    assert first == (GOLDEN / "sweep_d.header").read_text(encoding="utf-8").strip()
    for row in _rows(out / "sweep_d.csv"):
        d = int(row["d"])
        assert float(row["V_net"]) == pytest.approx((d - 1) / d, abs=3 * float(row["V_err"]) + 0.01)
        assert float(row["V_eq4_prediction"]) == pytest.approx((d - 1) / d / (1 + 0.004 - 0.002 / d), abs=1e-9)


def test_small_mu_sweep(tmp_path):
    path = _write(tmp_path, "kind = sweep-mu\nd = 10\nmu_values = [0.1, 0.3]\nn_trains = 50000\nn_phases = 6\n")
    out = tmp_path / "o"
    assert main(["--scenario", path, "--out", str(out), "--quiet"]) == EXIT_OK
    for row in _rows(out / "sweep_mu.csv"):
        mu = float(row["mu"])
        pred = 0.9 / (1 + 2 * mu - mu / 10)
        assert float(row["V_eq7_prediction"]) == pytest.approx(pred, abs=1e-9)
        assert float(row["V_net"]) == pytest.approx(pred, abs=3 * float(row["V_err"]))


def test_module_entry_point_help():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "timebin", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "--scenario" in res.stdout
