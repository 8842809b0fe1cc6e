"""Scenario files and the ``timebin`` command line.

A scenario is a plain ``key = value`` file; ``#`` starts a comment. Values
are Python literals (numbers, lists, True/False), bare words (``scan``,
``lab``, ``none``) or integer ranges written ``1..20``::

    kind = sweep-d
    d_values = 1..20
    mu = 0.001
    n_trains = 1000000
    seed = 7

Outputs (CSV, UTF-8, header row) go to ``--out``:

    scan      scan.csv      theta_rad,counts,exposure   (+ fit.json, histogram.csv)
    run       histogram.csv dt_ns,count,<origin tags>   (+ records.csv if records = true)
    sweep-d   sweep_d.csv   d,V_net,V_err,V_eq4_prediction
    sweep-mu  sweep_mu.csv  mu,V_net,V_err,V_eq7_prediction
    budget    budget.csv    v_d,v_multipair,v_misalign,v_phase,v_residual,v_max,v_total

plus ``manifest.json``. Exit status: 0 success, 2 configuration error,
3 runtime error; failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .analysis import (
    default_thetas,
    estimate_accidentals,
    fit_fringe,
    net_visibility,
    dimension_sweep,
    multipair_sweep,
    write_fit_report,
)
from .montecarlo import (
    DetectorConfig,
    ExperimentConfig,
    ideal_detectors,
    lab_detectors,
    pump_phase_step,
    run_experiment,
    scan_phase,
)
from .noise import budget_from_factors, visibility_budget
from .qstate import AnalyzerConfig, make_envelope_train
from .records import write_records_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

KINDS = ("run", "scan", "sweep-d", "sweep-mu", "budget")

DEFAULTS: Dict[str, Any] = {
    "kind": "scan",
    "seed": 0,
    "n_trains": 100_000,
    "d": None,
    "d_values": None,
    "mu": None,
    "mu_values": None,
    "phase_step": 0.0,
    "bin_spacing": 13.0,
    "edge_attenuation": 1.0,
    "t_s": None,
    "t_l": None,
    "imbalance_db": None,
    "delay_bins": 1,
    "phase_noise": 0.0,
    "residual_visibility": 1.0,
    "theta": 0.0,
    "n_phases": 12,
    "theta_values": None,
    "window": 1.0,
    "hist_bin_width": 0.25,
    "trigger_width": 1.0,
    "detectors": "ideal",
    "eta_a": None,
    "dark_a": None,
    "eta_b": None,
    "dark_b": None,
    "gated_b": None,
    "gate_width": None,
    "workers": 1,
    "records": False,
    "v_multipair": None,
    "v_misalign": None,
    "v_residual": None,
    "v_phase": None,
}

SCAN_COLUMNS = ("theta_rad", "counts", "exposure")
SWEEP_D_COLUMNS = ("d", "V_net", "V_err", "V_eq4_prediction")
SWEEP_MU_COLUMNS = ("mu", "V_net", "V_err", "V_eq7_prediction")
BUDGET_COLUMNS = ("v_d", "v_multipair", "v_misalign", "v_phase", "v_residual", "v_max", "v_total")


class ScenarioError(Exception):
    """Configuration problem; ``kind`` is syntax, unknown_key, constraint or conflict."""

    def __init__(self, kind: str, message: str, key: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.kind = kind
        self.key = key
        self.line = line
        self.message = message

    def diagnostic(self) -> str:
        return json.dumps(
            {"error": self.kind, "key": self.key, "line": self.line, "message": self.message},
            sort_keys=True,
        )


@dataclass
class ScenarioFile:
    kind: str
    values: Dict[str, Any]
    lines: Dict[str, int] = field(default_factory=dict)
    path: Optional[str] = None

    def __getitem__(self, key):
        return self.values[key]


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    if ".." in text and "[" not in text:
        lo, _, hi = text.partition("..")
        lo, hi = int(lo), int(hi)
        return list(range(lo, hi + 1))
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if text.replace("-", "").replace("_", "").isalnum():
            return text
        raise


def parse_scenario_text(text: str, path: Optional[str] = None) -> ScenarioFile:
    raw: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ScenarioError("syntax", f"expected 'key = value', got {body!r}", line=lineno)
        key, _, value = (s.strip() for s in body.partition("="))
        if not key or not value:
            raise ScenarioError("syntax", "empty key or value", key=key or None, line=lineno)
        if key in lines:
            raise ScenarioError("syntax", f"duplicate key {key!r}", key=key, line=lineno)
        if key not in DEFAULTS:
            raise ScenarioError("unknown_key", f"unknown key {key!r}", key=key, line=lineno)
        try:
            raw[key] = _parse_value(value)
        except (ValueError, SyntaxError):
            raise ScenarioError("syntax", f"cannot parse value {value!r}", key=key, line=lineno)
        lines[key] = lineno
    scenario = ScenarioFile(raw.get("kind", DEFAULTS["kind"]), {**DEFAULTS, **raw}, lines, path)
    validate_scenario(scenario)
    return scenario


def parse_scenario(path) -> ScenarioFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError("io", f"cannot read scenario: {exc}")
    return parse_scenario_text(text, str(path))


def _require(scn: ScenarioFile, key: str, ok: bool, constraint: str):
    if not ok:
        raise ScenarioError(
            "constraint", f"{key}: {constraint}", key=key, line=scn.lines.get(key)
        )


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_scenario(scn: ScenarioFile) -> None:
    v = scn.values
    _require(scn, "kind", v["kind"] in KINDS, f"kind in {{{', '.join(KINDS)}}}")
    kind = v["kind"]
    scn.kind = kind
    _require(scn, "seed", _is_int(v["seed"]) and 0 <= v["seed"] < 2**64, "0 <= seed < 2^64")
    _require(scn, "n_trains", _is_int(v["n_trains"]) and v["n_trains"] >= 1, "n_trains >= 1")
    _require(scn, "workers", _is_int(v["workers"]) and v["workers"] >= 1, "workers >= 1")

    if kind == "sweep-d":
        if v["d"] is not None:
            raise ScenarioError(
                "conflict", "sweep-d takes d_values; remove the fixed d", key="d", line=scn.lines.get("d")
            )
        if v["d_values"] is None:
            v["d_values"] = list(range(1, 21))
        dv = v["d_values"]
        _require(scn, "d_values", isinstance(dv, list) and dv and all(_is_int(x) and x >= 1 for x in dv), "d >= 1")
    elif v["d_values"] is not None:
        raise ScenarioError(
            "conflict", "d_values only applies to kind = sweep-d", key="d_values", line=scn.lines.get("d_values")
        )
    if kind == "sweep-mu":
        if v["mu"] is not None:
            raise ScenarioError(
                "conflict", "sweep-mu takes mu_values; remove the fixed mu", key="mu", line=scn.lines.get("mu")
            )
        if v["mu_values"] is None:
            v["mu_values"] = [0.05, 0.1, 0.2, 0.3, 0.5]
        mv = v["mu_values"]
        _require(scn, "mu_values", isinstance(mv, list) and mv and all(_is_num(x) and x >= 0 for x in mv), "mu >= 0")
    elif v["mu_values"] is not None:
        raise ScenarioError(
            "conflict", "mu_values only applies to kind = sweep-mu", key="mu_values", line=scn.lines.get("mu_values")
        )

    if kind != "sweep-d":
        if v["d"] is None and kind != "budget":
            v["d"] = 20
        if v["d"] is not None:
            _require(scn, "d", _is_int(v["d"]) and v["d"] >= 1, "d >= 1")
    if kind != "sweep-mu":
        if v["mu"] is None:
            v["mu"] = 0.001 if kind != "budget" else 0.0
        _require(scn, "mu", _is_num(v["mu"]) and v["mu"] >= 0, "mu >= 0")

    _require(scn, "bin_spacing", _is_num(v["bin_spacing"]) and v["bin_spacing"] > 0, "bin_spacing > 0")
    _require(scn, "edge_attenuation", _is_num(v["edge_attenuation"]) and 0 < v["edge_attenuation"] <= 1,
             "0 < edge_attenuation <= 1")
    _require(scn, "phase_step", _is_num(v["phase_step"]), "phase_step is a number")
    _require(scn, "theta", _is_num(v["theta"]), "theta is a number")
    _require(scn, "phase_noise", _is_num(v["phase_noise"]) and v["phase_noise"] >= 0, "phase_noise >= 0")
    _require(scn, "residual_visibility", _is_num(v["residual_visibility"]) and 0 <= v["residual_visibility"] <= 1,
             "0 <= residual_visibility <= 1")
    _require(scn, "delay_bins", _is_int(v["delay_bins"]) and v["delay_bins"] >= 1, "delay_bins >= 1")
    if v["imbalance_db"] is not None:
        for k in ("t_s", "t_l"):
            if v[k] is not None:
                raise ScenarioError("conflict", f"give either imbalance_db or {k}", key=k, line=scn.lines.get(k))
        _require(scn, "imbalance_db", _is_num(v["imbalance_db"]), "imbalance_db is a number")
    for k in ("t_s", "t_l"):
        if v[k] is not None:
            _require(scn, k, _is_num(v[k]) and 0 < v[k] <= 1, f"0 < {k} <= 1")
    if (v["t_s"] is None) != (v["t_l"] is None):
        missing = "t_l" if v["t_l"] is None else "t_s"
        raise ScenarioError("conflict", "t_s and t_l must be given together", key=missing)
    _require(scn, "n_phases", _is_int(v["n_phases"]) and v["n_phases"] >= 3, "n_phases >= 3")
    if v["theta_values"] is not None:
        tv = v["theta_values"]
        _require(scn, "theta_values", isinstance(tv, list) and len(tv) >= 3 and all(_is_num(x) for x in tv),
                 "at least 3 numeric phases")
    _require(scn, "window", _is_num(v["window"]) and 0 < v["window"] <= v["bin_spacing"] / 2,
             "0 < window <= bin_spacing / 2")
    _require(scn, "hist_bin_width", _is_num(v["hist_bin_width"]) and 0 < v["hist_bin_width"] <= v["window"],
             "0 < hist_bin_width <= window")
    tw = v["trigger_width"]
    _require(scn, "trigger_width", tw is None or (_is_num(tw) and tw > 0), "trigger_width > 0 or none")
    _require(scn, "detectors", v["detectors"] in ("ideal", "lab"), "detectors in {ideal, lab}")
    for k in ("eta_a", "eta_b"):
        if v[k] is not None:
            _require(scn, k, _is_num(v[k]) and 0 <= v[k] <= 1, f"0 <= {k} <= 1")
    for k in ("dark_a", "dark_b"):
        if v[k] is not None:
            _require(scn, k, _is_num(v[k]) and v[k] >= 0, f"{k} >= 0")
    if v["gate_width"] is not None:
        _require(scn, "gate_width", _is_num(v["gate_width"]) and v["gate_width"] > 0, "gate_width > 0")
    if v["gated_b"] is not None:
        _require(scn, "gated_b", isinstance(v["gated_b"], bool), "gated_b is true or false")
    _require(scn, "records", isinstance(v["records"], bool), "records is true or false")
    for k in ("v_multipair", "v_misalign", "v_residual", "v_phase"):
        if v[k] is not None:
            _require(scn, k, _is_num(v[k]) and 0 <= v[k] <= 1, f"0 <= {k} <= 1")

    # the physical constructors have the final word on consistency
    if kind != "budget":
        try:
            build_experiment(scn, d=(v["d_values"] or [v["d"]])[0], mu=(v["mu_values"] or [v["mu"]])[0])
        except ValueError as exc:
            raise ScenarioError("constraint", str(exc))


def _analyzer(v) -> AnalyzerConfig:
    kw = dict(delay_bins=v["delay_bins"])
    if v["imbalance_db"] is not None:
        return AnalyzerConfig.from_imbalance_db(v["imbalance_db"], **kw)
    if v["t_s"] is not None:
        return AnalyzerConfig(t_s=v["t_s"], t_l=v["t_l"], **kw)
    return AnalyzerConfig(**kw)


def _detectors(v):
    det_a, det_b = lab_detectors() if v["detectors"] == "lab" else ideal_detectors()
    over_a = {k: v[s] for k, s in (("efficiency", "eta_a"), ("dark_rate", "dark_a")) if v[s] is not None}
    over_b = {
        k: v[s]
        for k, s in (("efficiency", "eta_b"), ("dark_rate", "dark_b"), ("gated", "gated_b"), ("gate_width", "gate_width"))
        if v[s] is not None
    }
    return replace(det_a, **over_a), replace(det_b, **over_b)


def build_experiment(scn: ScenarioFile, d: int, mu: float) -> ExperimentConfig:
    v = scn.values
    train = make_envelope_train(d, v["phase_step"], mu, v["bin_spacing"], v["edge_attenuation"])
    det_a, det_b = _detectors(v)
    return ExperimentConfig(
        train=train,
        analyzer=_analyzer(v),
        detector_a=det_a,
        detector_b=det_b,
        phase_noise_sigma=v["phase_noise"],
        residual_visibility=v["residual_visibility"],
        n_trains=v["n_trains"],
        coincidence_window=v["window"],
        trigger_width=v["trigger_width"],
        hist_bin_width=v["hist_bin_width"],
        seed=v["seed"],
    )


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _thetas(v) -> np.ndarray:
    if v["theta_values"] is not None:
        return np.array(v["theta_values"], float)
    return default_thetas(v["n_phases"])


def execute(scn: ScenarioFile, out_dir, quiet: bool = False, overrides: Optional[dict] = None) -> dict:
    """Run a validated scenario, write its outputs and return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    v = scn.values
    started = time.perf_counter()
    outputs: List[str] = []
    summary: Dict[str, Any] = {}

    def say(msg):
        if not quiet:
            print(msg)

    if scn.kind == "budget":
        factors = [v[k] for k in ("v_multipair", "v_misalign", "v_residual")]
        if all(f is not None for f in factors):
            budget = budget_from_factors(*factors, v_phase=v["v_phase"] or 1.0, d=v["d"])
        else:
            an = _analyzer(v)
            budget = visibility_budget(v["d"], v["mu"], an.t_s, an.t_l, v["phase_noise"], v["residual_visibility"])
        vals = budget.as_dict()
        _write_rows(out / "budget.csv", BUDGET_COLUMNS, [[vals[k] for k in BUDGET_COLUMNS]])
        outputs.append("budget.csv")
        summary = {k: vals[k] for k in ("v_max", "v_total")}
        say(f"budget: v_max={vals['v_max']:.4f} v_total={vals['v_total']:.4f}")

    elif scn.kind == "run":
        cfg = build_experiment(scn, v["d"], v["mu"])
        cfg = replace(cfg, analyzer=cfg.analyzer.with_phase(v["theta"], pump_phase_step(cfg.train)))
        res = run_experiment(cfg, workers=v["workers"], keep_records=v["records"])
        res.histogram.write_csv(out / "histogram.csv")
        outputs.append("histogram.csv")
        if v["records"]:
            write_records_csv(out / "records.csv", res.records)
            outputs.append("records.csv")
        summary = {"coincidences_dt0": res.histogram.window(0.0, cfg.coincidence_window), "pairs": res.n_pairs}
        say(f"run: {summary['coincidences_dt0']} coincidences in the dt=0 window from {res.n_pairs} pairs")

    elif scn.kind == "scan":
        cfg = build_experiment(scn, v["d"], v["mu"])
        scan = scan_phase(cfg, _thetas(v), workers=v["workers"])
        scan.write_csv(out / "scan.csv")
        scan.histogram.write_csv(out / "histogram.csv")
        fit = fit_fringe(scan)
        acc = estimate_accidentals(scan, cfg.coincidence_window)
        write_fit_report(out / "fit.json", fit, acc.level)
        outputs += ["scan.csv", "histogram.csv", "fit.json"]
        v_net, v_err = net_visibility(fit, acc.level, acc.err)
        summary = {"visibility": fit.visibility, "visibility_err": fit.visibility_err, "v_net": v_net}
        say(f"scan: V={fit.visibility:.4f}+/-{fit.visibility_err:.4f} V_net={v_net:.4f}")

    elif scn.kind == "sweep-d":
        cfg = build_experiment(scn, v["d_values"][0], v["mu"])

        def factory(d):
            return make_envelope_train(d, v["phase_step"], v["mu"], v["bin_spacing"], v["edge_attenuation"])

        res = dimension_sweep(cfg, v["d_values"], len(_thetas(v)), factory, workers=v["workers"])
        _write_rows(out / "sweep_d.csv", SWEEP_D_COLUMNS, [[int(r.x), r.v_net, r.v_err, r.prediction] for r in res.rows])
        outputs.append("sweep_d.csv")
        summary = {"v_max": res.v_max, "v_max_err": res.v_max_err}
        say(f"sweep-d: V_max={res.v_max:.4f}+/-{res.v_max_err:.4f}")

    elif scn.kind == "sweep-mu":
        cfg = build_experiment(scn, v["d"], v["mu_values"][0])
        res = multipair_sweep(cfg, v["mu_values"], len(_thetas(v)), workers=v["workers"])
        _write_rows(out / "sweep_mu.csv", SWEEP_MU_COLUMNS, [[r.x, r.v_net, r.v_err, r.prediction] for r in res.rows])
        outputs.append("sweep_mu.csv")
        summary = {"rows": len(res.rows)}
        say(f"sweep-mu: {len(res.rows)} points written")

    manifest = {
        "kind": scn.kind,
        "seed": v["seed"],
        "config": {k: v[k] for k in sorted(v)},
        "overrides": overrides or {},
        "outputs": outputs,
        "summary": summary,
        "versions": {"timebin": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "wall_time_s": time.perf_counter() - started,
        "scenario_path": scn.path,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="timebin", description="Time-bin qudit entanglement simulator")
    p.add_argument("--scenario", required=True, help="scenario file (key = value)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--trains", type=int, help="override n_trains")
    p.add_argument("--quiet", action="store_true", help="no summary on stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trains is not None:
        overrides["n_trains"] = args.trains
    try:
        scn = parse_scenario(args.scenario)
        if overrides:
            scn.values.update(overrides)
            for k in overrides:
                scn.lines.pop(k, None)
            validate_scenario(scn)
    except ScenarioError as exc:
        print(exc.diagnostic(), file=sys.stderr)
        return EXIT_CONFIG
    try:
        execute(scn, args.out, quiet=args.quiet, overrides=overrides)
    except Exception as exc:  # noqa: BLE001 - every failure maps to one diagnostic line
        print(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
