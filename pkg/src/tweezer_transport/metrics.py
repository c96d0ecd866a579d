"""Figures of merit: infidelity statistics, trap occupations, temperature, heating."""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .evolution import EvolutionRecord
from .grid import SpatialGrid, WaveFunction, lowest_eigenstates, lowest_eigenstates_spectral
from .model import HBAR, KB, PhysicalParams, moving_potential
from .pulses import ControlPulse, StageSchedule


def infidelity(psi: WaveFunction, target: WaveFunction) -> float:
    """``1 - |<psi|target>|^2`` with the grid inner product."""
    return 1.0 - abs(psi.overlap(target)) ** 2


def _window(record: EvolutionRecord, lo: float, hi: float, values):
    tol = 1e-9 * max(abs(hi), 1e-300)
    mask = (record.times >= lo - tol) & (record.times <= hi + tol)
    sel = np.asarray(values)[mask]
    return sel[np.isfinite(sel)]


def waiting_stage_stats(record: EvolutionRecord, schedule: StageSchedule):
    """Max, mean, last value and population standard deviation over the wait stage."""
    lo, hi = schedule.waiting_window
    vals = _window(record, lo, hi, record.infidelity)
    if vals.size == 0:
        raise ValueError("no infidelity samples inside the waiting stage")
    return float(vals.max()), float(vals.mean()), float(vals[-1]), float(vals.std())


@dataclass
class Occupation:
    mean_n: float
    delta_n: float
    populations: np.ndarray
    leakage: float


def moving_occupation(psi: WaveFunction, x_mt: float, a_mt: float, grid: SpatialGrid,
                      p: PhysicalParams, k_states: int = 60,
                      kinetic: str = "spectral") -> Occupation:
    """Populations of ``psi`` over the bound states of the moving tweezer alone.

    Only negative-energy states are used; when fewer than ``k_states`` exist
    the basis is truncated with a warning. ``leakage = 1 - sum(p_n)``.
    ``kinetic="spectral"`` diagonalises with the propagator's kinetic
    energy, which keeps the highly excited levels accurate on coarse grids;
    ``"fd"`` uses the three-point stencil.
    """
    if not a_mt > 0:
        raise ValueError("moving tweezer is off")
    v = moving_potential(grid.x, x_mt, a_mt, p)
    k = min(k_states, grid.n_points)
    if kinetic == "spectral":
        res = lowest_eigenstates_spectral(grid, v, k, p.mass)
    elif kinetic == "fd":
        res = lowest_eigenstates(grid, v, k, p.mass)
    else:
        raise ValueError(f"unknown kinetic {kinetic!r}")
    bound = int(np.count_nonzero(res.energies < 0))
    if bound < k_states:
        warnings.warn(f"only {bound} bound states, fewer than k_states={k_states}",
                      RuntimeWarning, stacklevel=2)
    states = res.states[:bound]
    amp = states.conj() @ psi.amplitudes * grid.dx
    pops = np.abs(amp) ** 2
    total = pops.sum()
    n = np.arange(bound)
    if total > 0:
        mean = float(np.dot(n, pops) / total)
        delta = float(np.sqrt(max(np.dot((n - mean) ** 2, pops) / total, 0.0)))
    else:
        mean, delta = float("nan"), float("nan")
    return Occupation(mean, delta, pops, float(1.0 - total))


def moving_occupation_at(psi: WaveFunction, t: float, pulse: ControlPulse, grid: SpatialGrid,
                         p: PhysicalParams, k_states: int = 60, kinetic: str = "spectral") -> Occupation:
    """:func:`moving_occupation` with the tweezer controls read from ``pulse`` at ``t``."""
    lo, hi = pulse.schedule.transport_window
    if not lo <= t <= hi:
        raise ValueError(f"t = {t:.6g} s is outside the transport stage")
    x_mt, a_mt = pulse.at(t)
    return moving_occupation(psi, float(x_mt), float(a_mt), grid, p, k_states, kinetic)


def occupation_observer(grid: SpatialGrid, p: PhysicalParams, k_states: int = 60):
    """Adapter for :func:`evolve`'s ``occupation`` hook."""

    def observe(psi, x_mt, a_mt):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            occ = moving_occupation(psi, x_mt, a_mt, grid, p, k_states)
        return occ.mean_n, occ.delta_n, occ.leakage

    return observe


def effective_temperature(kinetic, p: PhysicalParams | None = None):
    """``2 <K> / k_B``."""
    kinetic = np.asarray(kinetic, dtype=float)
    if np.any(kinetic < 0):
        raise ValueError("kinetic energy must be non-negative")
    return 2.0 * kinetic / KB


def harmonic_heating_from_path(times, positions, omega: float, p: PhysicalParams) -> float:
    """Quanta added to a harmonic oscillator whose centre follows ``positions``.

    ``(m/2) |int a(t) exp(i omega t) dt|^2 / (hbar omega)`` with ``a`` the
    numerically differentiated centre acceleration.
    """
    t = np.asarray(times, dtype=float)
    a = np.gradient(np.gradient(np.asarray(positions, dtype=float), t), t)
    integral = np.trapezoid(a * np.exp(1j * omega * t), t)
    return float(0.5 * p.mass * abs(integral) ** 2 / (HBAR * omega))


def harmonic_heating_estimate(pulse: ControlPulse, omega: float, p: PhysicalParams) -> float:
    """:func:`harmonic_heating_from_path` along the pulse's tweezer trajectory."""
    return harmonic_heating_from_path(pulse.times, pulse.positions, omega, p)


@dataclass
class MetricsReport:
    infidelity_max: float
    infidelity_avg: float
    infidelity_last: float
    infidelity_std: float
    max_mean_n: float
    max_delta_n: float
    max_t_eff: float

    @property
    def max_occupation_spread(self) -> float:
        """``Max(<N>) + Max(Delta N)`` over transport."""
        return self.max_mean_n + self.max_delta_n

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def summarize(record: EvolutionRecord, schedule: StageSchedule) -> MetricsReport:
    i_max, i_avg, i_last, i_std = waiting_stage_stats(record, schedule)
    lo, hi = schedule.transport_window
    mean = _window(record, lo, hi, record.mean_n)
    delta = _window(record, lo, hi, record.delta_n)
    kin = record.kinetic[np.isfinite(record.kinetic)]
    return MetricsReport(
        i_max, i_avg, i_last, i_std,
        float(mean.max()) if mean.size else float("nan"),
        float(delta.max()) if delta.size else float("nan"),
        float(effective_temperature(kin.max())) if kin.size else float("nan"),
    )
