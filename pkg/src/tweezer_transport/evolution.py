"""Split-step Fourier propagation under the moving plus static tweezer potential."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .grid import SpatialGrid, WaveFunction
from .model import HBAR, PhysicalParams, moving_potential, static_potential
from .pulses import ControlPulse

SCHEMES = ("strang", "single")
NORM_DRIFT_LIMIT = 1e-8
_CHUNK = 256


class NormDriftError(RuntimeError):
    """The propagated norm left ``1 +/- NORM_DRIFT_LIMIT``; dt or the grid is inadequate."""


@dataclass(frozen=True)
class EvolutionConfig:
    """Time stepping settings.

    Parameters
    ----------
    n_steps : int
        Number of steps over the protocol; ``dt = T / n_steps``.
    scheme : {"strang", "single"}
    record_stride : int
        Infidelity, norm and kinetic energy are recorded every this many steps.
    occupation_stride : int
        Moving-trap occupations are computed every this many steps during
        transport. ``0`` disables them.
    k_states : int
        Moving-trap eigenstates used for the occupations.
    """

    n_steps: int = 5000
    scheme: str = "strang"
    record_stride: int = 1
    occupation_stride: int = 25
    k_states: int = 60
    record_kinetic: bool = True

    def __post_init__(self):
        if self.n_steps < 100:
            raise ValueError("n_steps must be >= 100")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.occupation_stride < 0:
            raise ValueError("occupation_stride must be >= 0")
        if self.k_states < 1:
            raise ValueError("k_states must be >= 1")

    def dt(self, total_time: float) -> float:
        return total_time / self.n_steps


@dataclass
class EvolutionRecord:
    """Observables sampled along a propagation.

    ``mean_n``/``delta_n`` are NaN where no occupation was computed.
    """

    times: np.ndarray
    infidelity: np.ndarray
    norm: np.ndarray
    kinetic: np.ndarray
    mean_n: np.ndarray
    delta_n: np.ndarray
    leakage: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "infidelity", "mean_N", "delta_N", "kinetic_J", "norm"])
            for row in zip(self.times, self.infidelity, self.mean_n, self.delta_n,
                           self.kinetic, self.norm):
                w.writerow([repr(float(v)) for v in row])


def kinetic_expectation(psi: WaveFunction, grid: SpatialGrid, p: PhysicalParams) -> float:
    """``<p^2/2m>`` from the unitary discrete Fourier transform of ``psi``."""
    return _kinetic(psi.amplitudes, grid.wavenumbers, grid.dx, p.mass)


def _kinetic(amplitudes, k, dx, mass):
    phi = sfft.fft(amplitudes, norm="ortho")
    return float(np.sum(HBAR**2 * k**2 / (2 * mass) * np.abs(phi) ** 2) * dx)


def _control_samples(pulse: ControlPulse, n_steps: int):
    """Controls at the step times ``t_n = n T / n_steps``, n = 0..n_steps."""
    times = np.linspace(0.0, pulse.total_time, n_steps + 1)
    if pulse.n_samples == n_steps + 1:
        return times, pulse.positions, pulse.amplitudes
    x, a = pulse.at(times)
    return times, x, a


def _phase_chunk(x, v_static, x_mt, a_mt, p, factor):
    """``exp(-i V_n factor / hbar)`` for a block of step indices, shape (n, N)."""
    v = v_static[None, :] + moving_potential(x[None, :], x_mt[:, None], a_mt[:, None], p)
    return np.exp(-1j * factor / HBAR * v)


def evolve(psi0: WaveFunction, pulse: ControlPulse, grid: SpatialGrid, cfg: EvolutionConfig,
           p: PhysicalParams, target: WaveFunction | None = None, occupation=None,
           record_after: float | None = None):
    """Propagate ``psi0`` through ``pulse``.

    Strang steps read ``psi_n = U_V(n, dt/2) U_T(dt) U_V(n-1, dt/2) psi_{n-1}``
    and single steps ``psi_n = U_V(n, dt) U_T(dt) psi_{n-1}``, with ``V_n``
    the potential at ``t_n = n dt``. Between recorded steps the trailing and
    leading half-phases share one multiplication.

    Parameters
    ----------
    target : WaveFunction, optional
        Reference for the infidelity series (NaN when absent).
    occupation : callable, optional
        ``occupation(psi, x_mt, a_mt) -> (mean, delta, leakage)``, called every
        ``cfg.occupation_stride`` steps while the tweezer is on inside the
        transport window.
    record_after : float, optional
        Skip regular recording before this time; the first and last steps
        are always recorded.

    Returns
    -------
    WaveFunction, EvolutionRecord
    """
    if psi0.grid != grid:
        raise ValueError("psi0 lives on a different grid")
    if abs(psi0.norm() - 1.0) > 1e-8:
        raise ValueError("psi0 must be normalised")
    if target is not None and target.grid != grid:
        raise ValueError("target lives on a different grid")

    n = cfg.n_steps
    T = pulse.total_time
    dt = T / n
    times, xs, amps = _control_samples(pulse, n)
    x = grid.x
    dx = grid.dx
    k = grid.wavenumbers
    v_st = static_potential(x, p)
    kin_phase = np.exp(-1j * HBAR * k**2 / (2 * p.mass) * dt)
    strang = cfg.scheme == "strang"
    tgt = None if target is None else target.amplitudes.conj() * dx
    t_lo, t_hi = pulse.schedule.transport_window

    rec_idx = list(range(0, n + 1, cfg.record_stride))
    if rec_idx[-1] != n:
        rec_idx.append(n)
    is_rec = np.zeros(n + 1, dtype=bool)
    is_rec[rec_idx] = True
    if record_after is not None:
        is_rec &= times >= record_after * (1 - 1e-12)
        is_rec[[0, n]] = True
    occ_on = np.zeros(n + 1, dtype=bool)
    if occupation is not None and cfg.occupation_stride > 0:
        steps = np.arange(0, n + 1, cfg.occupation_stride)
        mask = (times[steps] >= t_lo) & (times[steps] <= t_hi) & (amps[steps] > 0)
        occ_on[steps[mask]] = True
    is_rec |= occ_on

    n_rec = int(is_rec.sum())
    out_t = np.empty(n_rec)
    out_inf = np.full(n_rec, np.nan)
    out_norm = np.empty(n_rec)
    out_kin = np.full(n_rec, np.nan)
    out_mean = np.full(n_rec, np.nan)
    out_delta = np.full(n_rec, np.nan)
    out_leak = np.full(n_rec, np.nan)
    slot = 0

    def record(step, psi):
        nonlocal slot
        nrm = float(np.sum(np.abs(psi) ** 2) * dx)
        if abs(nrm - 1.0) > NORM_DRIFT_LIMIT:
            raise NormDriftError(
                f"norm drifted to {nrm:.12f} at t = {times[step]:.6g} s "
                f"(dt = {dt:.3g} s, dx = {dx:.3g} m, scheme {cfg.scheme})")
        out_t[slot] = times[step]
        out_norm[slot] = nrm
        if tgt is not None:
            out_inf[slot] = 1.0 - abs(np.dot(tgt, psi)) ** 2
        if cfg.record_kinetic:
            out_kin[slot] = _kinetic(psi, k, dx, p.mass)
        if occ_on[step]:
            out_mean[slot], out_delta[slot], out_leak[slot] = occupation(
                WaveFunction(psi, grid), xs[step], amps[step])
        slot += 1

    psi = psi0.amplitudes.copy()
    record(0, psi)
    factor = 0.5 * dt if strang else dt
    # Strang: when lead_done, psi already carries the leading half-phase of the next step
    lead_done = not strang
    ph_prev = None
    for start in range(0, n + 1, _CHUNK):
        stop = min(start + _CHUNK, n + 1)
        phases = _phase_chunk(x, v_st, xs[start:stop], amps[start:stop], p, factor)
        for j in range(phases.shape[0]):
            step = start + j
            ph = phases[j]
            if step > 0:
                if not lead_done:
                    psi *= ph_prev
                psi = sfft.ifft(kin_phase * sfft.fft(psi))
                psi *= ph
                if strang:
                    lead_done = not is_rec[step]
                    if lead_done:
                        psi *= ph
                if is_rec[step]:
                    record(step, psi)
            ph_prev = ph
    record_ = EvolutionRecord(out_t, out_inf, out_norm, out_kin, out_mean, out_delta, out_leak,
                              {"scheme": cfg.scheme, "n_steps": n, "dt": dt,
                               "pulse": pulse.label})
    return WaveFunction(psi, grid), record_
