import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tweezer_transport.cli import main
from tweezer_transport.config import DEFAULTS, ConfigError, load, tomllib
from tweezer_transport.model import A_EXP, LAB_UNITS, PhysicalParams, tau_static

PHYSICAL = """[physical]
mass_kg = 6.47e-26
a_static_mhz = 0.53
sigma_static_um = 0.35
n_static = 2
separation_um = 7.0
sigma_moving_um = 0.47
"""
TAU_MS = tau_static(PhysicalParams()) * 1e3


def write_config(path, body=""):
    path.write_text(PHYSICAL + body)
    return path


def toml_list(values):
    return "[" + ", ".join(repr(float(v)) for v in values) + "]"


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_defaults_file_matches_builtin():
    shipped = tomllib.loads((Path(__file__).parent.parent / "configs" / "default.toml").read_text())
    assert shipped == DEFAULTS


def test_load_converts_to_si(tmp_path):
    cfg = load(write_config(tmp_path / "c.toml", "[pulse]\ntotal_time_ms = 2.0\n"))
    assert cfg.total_time == pytest.approx(2e-3)
    assert cfg.a_max == pytest.approx(A_EXP)
    assert cfg.dx == pytest.approx(0.02e-6)
    assert cfg.sweep_times.size == 60
    assert cfg.sweep_times[0] == pytest.approx(1e-5) and cfg.sweep_times[-1] == pytest.approx(3e-3)


@pytest.mark.parametrize("body,match", [
    ("[pulse]\ntotal_tme_ms = 1.0\n", "unknown key"),
    ("[pulses]\nfamily = 'sta'\n", "unknown key or section"),
    ("[pulse]\ntotal_time_ms = -1.0\n", "positive"),
    ("[pulse]\nfamily = 'cubic'\n", "unknown pulse family"),
    ("[pulse]\neta = 1.5\n", "eta"),
    ("[evolution]\nscheme = 'rk4'\n", "scheme"),
    ("[evolution]\nn_steps = 'many'\n", "expected int"),
    ("[optimizer]\ncontrols = ['phase']\n", "controls"),
    ("[validate]\ndx_um = [0.01, 0.02]\n", "at least 6"),
])
def test_config_errors(tmp_path, body, match):
    with pytest.raises(ConfigError, match=match):
        load(write_config(tmp_path / "c.toml", body))


def test_missing_mass(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(PHYSICAL.replace("mass_kg = 6.47e-26\n", ""))
    with pytest.raises(ConfigError, match="mass_kg"):
        load(path)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_bad_toml_and_missing_file(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[physical\n")
    assert main(["validate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["validate", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2


def test_single_time_sweep_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.toml", "[sweep]\nt_ms = [1.0]\n")
    assert main(["sweep-time", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_one_by_n_heatmap_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.toml", "[sweep]\nt_ms = [0.5, 1.0]\na_max_mhz = [3.57]\n")
    assert main(["heatmap", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_simulate_sta(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["infidelity_max"] <= 1e-3
    assert metrics["pulse_global_max_j"] == pytest.approx(A_EXP, rel=5e-3)
    assert (out / "series.csv").read_text().startswith("t_s,infidelity,mean_N,delta_N,kinetic_J,norm")
    assert (out / "pulse.csv").read_text().startswith("t_s,x_m,A_J")


@pytest.mark.parametrize("t_ms", [0.3, 3.0])
def test_simulate_linear_fails(tmp_path, t_ms):
    cfg = write_config(tmp_path / "c.toml", f"[pulse]\ntotal_time_ms = {t_ms}\n")
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--pulse", "linear", "--out", str(out)]) == 0
    assert json.loads((out / "metrics.json").read_text())["infidelity_max"] > 1e-2


def test_export_pulse(tmp_path):
    assert main(["export-pulse", "--pulse", "hybrid_0.4", "--out", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "pulse_hybrid_0.4.csv", delimiter=",", skiprows=1)
    assert data.shape == (5001, 3)
    assert data[-1, 1] == pytest.approx(7e-6)
    assert not (tmp_path / "pulse_hybrid_0.4.json").exists()


def test_export_sta_pulse_sidecar(tmp_path):
    assert main(["export-pulse", "--pulse", "sta", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "pulse_sta.json").read_text())
    assert set(meta) == {"omega_tilde_sq", "a_max_cr", "global_max"}
    assert meta["global_max"] == pytest.approx(A_EXP, rel=5e-3)


@pytest.mark.slow
def test_sweep_thresholds(tmp_path):
    # default T grid restricted to 0.3-2 ms; thresholds of oscillating curves depend on the grid
    times = np.geomspace(0.01, 3.0, 60)
    times = times[(times >= 0.3) & (times <= 2.0)]
    cfg = write_config(tmp_path / "c.toml",
                       f"[sweep]\nt_ms = {toml_list(times)}\nfamilies = ['sta', 'min_jerk']\n"
                       "occupations = false\n")
    out = tmp_path / "sweep"
    assert main(["sweep-time", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_rows(out / "sweep.csv")
    assert list(rows[0]) == ["pulse", "T_s", "Amax_J", "inf_max", "inf_avg", "inf_last", "inf_std",
                             "maxN", "dN", "Teff_K", "status"]
    assert len(rows) == 2 * times.size and all(r["status"] == "ok" for r in rows)
    thr = json.loads((out / "thresholds.json").read_text())["families"]
    assert thr["sta"]["threshold_T_over_tau_st"] == pytest.approx(18, rel=0.15)
    assert thr["min_jerk"]["threshold_T_over_tau_st"] == pytest.approx(31, rel=0.15)


@pytest.mark.slow
def test_heatmap_amplitude_trends(tmp_path):
    times = [15 * TAU_MS, 25 * TAU_MS]
    amps = [LAB_UNITS.depth_from_si(k * A_EXP) for k in (1, 2, 8, 10)]
    cfg = write_config(tmp_path / "c.toml",
                       f"[sweep]\nt_ms = {toml_list(times)}\na_max_mhz = {toml_list(amps)}\n"
                       "families = ['sta', 'min_jerk']\noccupations = false\n")
    out = tmp_path / "hm"
    assert main(["heatmap", "--config", str(cfg), "--out", str(out), "--jobs", "2"]) == 0
    rows = read_rows(out / "heatmap.csv")
    assert len(rows) == 16
    cell = {(r["pulse"], round(float(r["T_s"]) / (TAU_MS * 1e-3)),
             round(float(r["Amax_J"]) / A_EXP)): float(r["inf_max"]) for r in rows}
    sta = [cell[("sta", 25, k)] for k in (1, 2, 8, 10)]
    assert max(sta) / min(sta) < 10
    assert cell[("min_jerk", 15, 8)] > cell[("min_jerk", 15, 2)]


def test_optimize_zero_budget(tmp_path):
    cfg = write_config(tmp_path / "c.toml", "[optimizer]\nn_superiterations = 0\nt_ms = [1.0]\n")
    out = tmp_path / "opt"
    assert main(["optimize", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_rows(out / "comparison.csv")
    assert len(rows) == 1
    assert float(rows[0]["opt_inf_max"]) == float(rows[0]["guess_inf_max"])
    assert float(rows[0]["max_N_plus_dN"]) >= 0
    assert (out / "opt_min_jerk_T1ms.json").exists()
    assert (out / "opt_min_jerk_T1ms_best_pulse.csv").exists()


def test_optimize_reproducible_and_parallel(tmp_path):
    body = "[optimizer]\nn_superiterations = 1\nmax_evals_per_si = 4\nt_ms = [0.8, 1.0]\n"
    cfg = write_config(tmp_path / "c.toml", body)
    outs = [tmp_path / name for name in ("a", "b", "c")]
    assert main(["optimize", "--config", str(cfg), "--out", str(outs[0]), "--seed", "7"]) == 0
    assert main(["optimize", "--config", str(cfg), "--out", str(outs[1]), "--seed", "7"]) == 0
    assert main(["optimize", "--config", str(cfg), "--out", str(outs[2]), "--seed", "7",
                 "--jobs", "2"]) == 0
    files = sorted(f.name for f in outs[0].iterdir())
    assert len(files) == 5
    for other in outs[1:]:
        assert sorted(f.name for f in other.iterdir()) == files
        for name in files:
            assert (other / name).read_bytes() == (outs[0] / name).read_bytes()


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = write_config(tmp_path / "c.toml",
                       "[sweep]\nt_ms = [0.2, 0.4, 0.6]\nfamilies = ['min_jerk', 'sta_approx']\n"
                       "occupations = false\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep-time", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["sweep-time", "--config", str(cfg), "--out", str(b), "--jobs", "3"]) == 0
    for name in ("sweep.csv", "thresholds.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_records_failures(tmp_path):
    # the STA construction breaks down for a 1 us protocol; the sweep carries on
    cfg = write_config(tmp_path / "c.toml",
                       "[sweep]\nt_ms = [0.001, 0.5]\nfamilies = ['sta']\noccupations = false\n")
    out = tmp_path / "s"
    assert main(["sweep-time", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_rows(out / "sweep.csv")
    assert rows[0]["status"].startswith("failed:") and rows[1]["status"] == "ok"


def test_numerical_failure_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.toml", "[pulse]\nfamily = 'sta'\ntotal_time_ms = 0.001\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_validate_defaults_pass(tmp_path):
    assert main(["validate", "--out", str(tmp_path)]) == 0


def test_validate_coarse_grid_fails(tmp_path):
    cfg = write_config(tmp_path / "c.toml", "[grid]\ndx_um = 0.2\n")
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_validate_flags_single_splitting(tmp_path, capsys):
    assert main(["validate", "--scheme", "single", "--out", str(tmp_path)]) == 1
    report = json.loads(capsys.readouterr().out)
    item = report["items"]["splitting"]
    assert item["gap_to_strang"] >= 100 and item["gap_flagged"] and not item["passed"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tweezer_transport", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "export-pulse" in res.stdout
