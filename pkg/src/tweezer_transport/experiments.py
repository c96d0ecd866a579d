"""Experiment drivers behind the command line: runs, sweeps, optimisation, validation."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .config import RunConfig
from .evolution import EvolutionConfig, kinetic_expectation
from .grid import (DEFAULT_PADDING, SpatialGrid, WaveFunction, bound_state_count, build_grid,
                   discretization_error_study, eigenfunction_rms_error, harmonic_eigenfunction,
                   lowest_eigenstates, lowest_eigenstates_spectral, oscillator_level_count)
from .model import HBAR, PhysicalParams, omega_static, tau_static
from .optimizer import BasisConfig, OptimizerConfig, dcrab_optimize
from .transport import TransportProblem, build_pulse

SWEEP_COLUMNS = ("pulse", "T_s", "Amax_J", "inf_max", "inf_avg", "inf_last", "inf_std",
                 "maxN", "dN", "Teff_K", "status")
JOBS_ENV = "TWEEZER_JOBS"


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def _write_json(path: Path, data: dict):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")


# worker-local cache so each process builds grid and reference states once
_PROBLEMS: dict = {}


def _problem(p: PhysicalParams, evo: EvolutionConfig, padding: float, dx: float) -> TransportProblem:
    key = (p, evo, padding, dx)
    if key not in _PROBLEMS:
        _PROBLEMS[key] = TransportProblem(p, evo, padding, dx)
    return _PROBLEMS[key]


def run_jobs(func, jobs_args, jobs: int = 1):
    """Map ``func`` over ``jobs_args``, in a process pool when ``jobs > 1``; order is kept."""
    if jobs <= 1 or len(jobs_args) <= 1:
        return [func(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, jobs_args))


@dataclass(frozen=True)
class PointJob:
    family: str
    total_time: float
    a_max: float
    p: PhysicalParams
    evolution: EvolutionConfig
    padding: float
    dx: float
    eta: float
    amplitude_reference: str
    occupations: bool


def run_point(job: PointJob) -> dict:
    """One sweep cell; failures become a status string instead of an exception."""
    row = {"pulse": job.family, "T_s": job.total_time, "Amax_J": job.a_max}
    try:
        pr = _problem(job.p, job.evolution, job.padding, job.dx)
        pulse = build_pulse(job.family, job.total_time, job.a_max, job.p,
                            job.evolution.n_steps + 1, job.eta, job.amplitude_reference)
        _, rep = pr.run(pulse, occupations=job.occupations)
        row.update(inf_max=rep.infidelity_max, inf_avg=rep.infidelity_avg,
                   inf_last=rep.infidelity_last, inf_std=rep.infidelity_std,
                   maxN=rep.max_mean_n, dN=rep.max_delta_n, Teff_K=rep.max_t_eff, status="ok")
    except Exception as exc:  # recorded per cell, sweep continues
        reason = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
        row.update({k: math.nan for k in SWEEP_COLUMNS[3:-1]}, status=f"failed:{reason}")
    return row


def write_sweep_csv(rows, path: Path):
    rows = sorted(rows, key=lambda r: (r["pulse"], r["T_s"], r["Amax_J"]))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])
    return rows


def threshold_time(times, inf_max, threshold: float = 1e-4):
    """Smallest time on the sorted grid whose maximum infidelity is at or below ``threshold``."""
    order = np.argsort(times)
    for i in order:
        if np.isfinite(inf_max[i]) and inf_max[i] <= threshold:
            return float(times[i])
    return None


def _point_jobs(cfg: RunConfig, families, times, amps, occupations):
    return [PointJob(f, float(t), float(a), cfg.physical, cfg.evolution, cfg.padding, cfg.dx,
                     cfg.eta, cfg.amplitude_reference, occupations)
            for f in families for t in times for a in amps]


def simulate(cfg: RunConfig, out: Path) -> dict:
    """Single run: writes ``metrics.json``, ``series.csv`` and ``pulse.csv``."""
    out.mkdir(parents=True, exist_ok=True)
    pr = _problem(cfg.physical, cfg.evolution, cfg.padding, cfg.dx)
    pulse = build_pulse(cfg.family, cfg.total_time, cfg.a_max, cfg.physical,
                        cfg.evolution.n_steps + 1, cfg.eta, cfg.amplitude_reference)
    rec, rep = pr.run(pulse, occupations=True)
    metrics = rep.to_dict()
    metrics.update(pulse=cfg.family, total_time_s=cfg.total_time, a_max_j=cfg.a_max,
                   pulse_global_max_j=float(pulse.amplitudes.max()), scheme=cfg.evolution.scheme,
                   n_steps=cfg.evolution.n_steps, n_points=pr.grid.n_points, dx_m=pr.grid.dx)
    _write_json(out / "metrics.json", metrics)
    rec.to_csv(out / "series.csv")
    pulse.to_csv(out / "pulse.csv")
    return metrics


def sweep_time(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    """Infidelity and heating versus total time; writes ``sweep.csv`` and ``thresholds.json``."""
    if len(cfg.sweep_times) < 2:
        raise ValueError("a time sweep needs at least 2 T values")
    out.mkdir(parents=True, exist_ok=True)
    amps = [cfg.a_max]
    rows = run_jobs(run_point, _point_jobs(cfg, cfg.sweep_families, cfg.sweep_times, amps,
                                           cfg.sweep_occupations), jobs)
    rows = write_sweep_csv(rows, out / "sweep.csv")
    tau = tau_static(cfg.physical)
    report = {}
    for fam in sorted(set(cfg.sweep_families)):
        sel = [r for r in rows if r["pulse"] == fam]
        t = threshold_time(np.array([r["T_s"] for r in sel]), np.array([r["inf_max"] for r in sel]),
                           cfg.threshold)
        report[fam] = {"threshold_T_s": t, "threshold_T_over_tau_st": None if t is None else t / tau}
    summary = {"threshold": cfg.threshold, "tau_st_s": tau, "families": report,
               "failed_points": sum(r["status"] != "ok" for r in rows)}
    _write_json(out / "thresholds.json", summary)
    return summary


def heatmap(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    """Full T x A_max grid per family; long-format ``heatmap.csv``."""
    if len(cfg.sweep_times) < 2 or len(cfg.sweep_amplitudes) < 2:
        raise ValueError("a heat map needs at least 2 values on both axes")
    out.mkdir(parents=True, exist_ok=True)
    rows = run_jobs(run_point, _point_jobs(cfg, cfg.sweep_families, cfg.sweep_times,
                                           cfg.sweep_amplitudes, cfg.sweep_occupations), jobs)
    rows = write_sweep_csv(rows, out / "heatmap.csv")
    return {"points": len(rows), "failed_points": sum(r["status"] != "ok" for r in rows)}


@dataclass(frozen=True)
class OptimizeJob:
    family: str
    total_time: float
    a_max: float
    p: PhysicalParams
    evolution: EvolutionConfig
    padding: float
    dx: float
    eta: float
    amplitude_reference: str
    basis: BasisConfig
    optimizer: OptimizerConfig


def run_optimization(job: OptimizeJob):
    pr = _problem(job.p, job.evolution, job.padding, job.dx)
    guess = build_pulse(job.family, job.total_time, job.a_max, job.p,
                        job.evolution.n_steps + 1, job.eta, job.amplitude_reference)
    res = dcrab_optimize(guess, pr.objective, job.basis, job.optimizer)
    try:
        _, rep = pr.run(res.best_pulse, occupations=True)
        spread = rep.max_occupation_spread
    except Exception:
        spread = math.nan
    return res, spread


def optimize(cfg: RunConfig, out: Path, jobs: int = 1) -> list:
    """dCRAB per (family, T); per-job JSON and pulse CSV plus ``comparison.csv``."""
    out.mkdir(parents=True, exist_ok=True)
    job_list = [OptimizeJob(f, float(t), cfg.a_max, cfg.physical, cfg.evolution, cfg.padding,
                            cfg.dx, cfg.eta, cfg.amplitude_reference, cfg.basis, cfg.optimizer)
                for f in cfg.opt_families for t in cfg.opt_times]
    results = run_jobs(run_optimization, job_list, jobs)
    rows = []
    for job, (res, spread) in zip(job_list, results):
        stem = f"opt_{job.family}_T{job.total_time * 1e3:.6g}ms"
        res.save(out, stem)
        ratio = res.guess_objective / res.best_objective if res.best_objective > 0 else math.inf
        rows.append({"pulse": job.family, "T_s": job.total_time,
                     "guess_inf_max": res.guess_objective, "opt_inf_max": res.best_objective,
                     "improvement": ratio, "max_N_plus_dN": spread,
                     "evaluations": res.evaluations_used})
    rows.sort(key=lambda r: (r["pulse"], r["T_s"]))
    cols = ("pulse", "T_s", "guess_inf_max", "opt_inf_max", "improvement", "max_N_plus_dN",
            "evaluations")
    with (out / "comparison.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) if not isinstance(r[c], int) else str(r[c]) for c in cols])
    return rows


def export_pulse(cfg: RunConfig, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    pulse = build_pulse(cfg.family, cfg.total_time, cfg.a_max, cfg.physical,
                        cfg.evolution.n_steps + 1, cfg.eta, cfg.amplitude_reference)
    path = out / f"pulse_{cfg.family}.csv"
    pulse.to_csv(path)
    if "a_max_cr" in pulse.metadata:
        meta = {k: float(pulse.metadata[k]) for k in ("omega_tilde_sq", "a_max_cr", "global_max")}
        _write_json(out / f"pulse_{cfg.family}.json", meta)
    return path


# -- numerics battery ---------------------------------------------------------

def static_oscillator_infidelity(p: PhysicalParams, scheme: str, total_time: float = 3e-3,
                                 n_steps: int = 5000, padding: float = DEFAULT_PADDING,
                                 dx: float = 0.02e-6, omega: float | None = None) -> dict:
    """Evolve the analytic harmonic ground state in a static harmonic trap.

    Returns the mean and maximum infidelity against the initial state.
    """
    omega = omega_static(p) if omega is None else omega
    grid = build_grid(p, padding, dx)
    x = grid.x
    psi0 = WaveFunction(harmonic_eigenfunction(0, x, omega, p.mass), grid).normalized()
    v_ho = 0.5 * p.mass * omega**2 * x**2
    inf = _evolve_static(psi0, v_ho, grid, p, total_time, n_steps, scheme)
    return {"mean": float(inf.mean()), "max": float(inf.max())}


def _evolve_static(psi0: WaveFunction, potential, grid: SpatialGrid, p: PhysicalParams,
                   total_time: float, n_steps: int, scheme: str) -> np.ndarray:
    """Split-step evolution in a fixed potential, infidelity against ``psi0`` per step."""
    dt = total_time / n_steps
    kin = np.exp(-1j * HBAR * grid.wavenumbers**2 / (2 * p.mass) * dt)
    half = np.exp(-0.5j * potential * dt / HBAR)
    full = half * half
    ref = psi0.amplitudes.conj() * grid.dx
    psi = psi0.amplitudes.copy()
    out = np.empty(n_steps)
    for n in range(n_steps):
        if scheme == "strang":
            psi = half * sfft.ifft(kin * sfft.fft(half * psi))
        else:
            psi = full * sfft.ifft(kin * sfft.fft(psi))
        out[n] = 1.0 - abs(np.dot(ref, psi)) ** 2
    return out


def validate(cfg: RunConfig, out: Path | None = None) -> dict:
    """Numerics battery; each item reports measured values and ``passed``."""
    p = cfg.physical
    va = cfg.validate
    items = {}

    study = discretization_error_study(np.array(va["dx_um"]) * 1e-6, p, cfg.padding)
    grid_cfg = build_grid(p, cfg.padding, cfg.dx)
    err_cfg = eigenfunction_rms_error(grid_cfg, p)
    b_lo, b_hi = va["exponent_range"]
    items["discretization"] = {
        "a": study.a, "b": study.b, "c": study.c,
        "dx_um": grid_cfg.dx * 1e6, "error_at_dx": err_cfg, "max_error": va["max_error"],
        "passed": bool(b_lo <= study.b <= b_hi and err_cfg <= va["max_error"]),
    }

    used = static_oscillator_infidelity(p, cfg.evolution.scheme, padding=cfg.padding, dx=cfg.dx,
                                        n_steps=cfg.evolution.n_steps)
    strang = (used if cfg.evolution.scheme == "strang" else
              static_oscillator_infidelity(p, "strang", padding=cfg.padding, dx=cfg.dx,
                                           n_steps=cfg.evolution.n_steps))
    gap = used["mean"] / strang["mean"]
    gap_flag = cfg.evolution.scheme != "strang" and gap >= va["min_scheme_gap"]
    items["splitting"] = {
        "scheme": cfg.evolution.scheme, "mean_infidelity": used["mean"],
        "max_infidelity": used["max"], "strang_mean_infidelity": strang["mean"],
        "gap_to_strang": gap, "gap_flagged": bool(gap_flag),
        "passed": bool(used["mean"] < va["strang_max_infidelity"] and not gap_flag),
    }

    w = omega_static(p)
    grid = grid_cfg
    v_ho = 0.5 * p.mass * w**2 * grid.x**2
    res = lowest_eigenstates(grid, v_ho, 4, p.mass)
    e_rel = np.abs(res.energies / (HBAR * w * (np.arange(4) + 0.5)) - 1)
    ground = lowest_eigenstates_spectral(grid, v_ho, 1, p.mass).state(0)
    k_rel = abs(kinetic_expectation(ground, grid, p) / (HBAR * w / 4) - 1)
    ortho = float(np.abs(res.states @ res.states.T * grid.dx - np.eye(4)).max())
    # level counting needs a grid that resolves the top of the well
    depth = 20 * HBAR * w
    fine = SpatialGrid(-2e-6, 2e-6, 1601)
    v_trunc = np.minimum(0.5 * p.mass * w**2 * fine.x**2 - depth, 0.0)
    count = bound_state_count(fine, v_trunc, p.mass)
    levels = oscillator_level_count(depth, w)
    items["harmonic_oracles"] = {
        "energy_rel_error_max": float(e_rel.max()), "kinetic_rel_error": float(k_rel),
        "orthonormality_error": ortho, "truncated_well_count": count,
        "truncated_well_levels": levels,
        "passed": bool(e_rel.max() < 2e-2 and k_rel < 5e-3 and ortho < 1e-8
                       and abs(count - levels) <= 0.15 * levels),
    }
    report = {"items": items, "passed": all(i["passed"] for i in items.values())}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "validate.json", report)
    return report
