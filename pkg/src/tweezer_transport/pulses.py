"""Staged control schedules for the experimentally motivated transport ramps.

A protocol of total time ``T`` has four stages: capture, transport
(duration ``eta*T``), release and wait. The three non-transport stages share
the remaining time equally.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import PhysicalParams

_T_TOL = 1e-12
DEFAULT_ETA = 0.4
XI_STUDY_GRID = (0.0, 0.1, 0.2, 0.4, 0.8, 0.95, 1.0)


@dataclass(frozen=True)
class StageSchedule:
    total_time: float
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")

    @property
    def boundaries(self) -> tuple[float, float, float, float]:
        """End times of capture, transport, release and wait."""
        T, eta = self.total_time, self.eta
        return ((1 - eta) * T / 3, (1 + 2 * eta) * T / 3, (2 + eta) * T / 3, T)

    @property
    def transfer_duration(self) -> float:
        return (1 - self.eta) * self.total_time / 3

    @property
    def transport_duration(self) -> float:
        return self.eta * self.total_time

    @property
    def transport_window(self) -> tuple[float, float]:
        b = self.boundaries
        return b[0], b[1]

    @property
    def waiting_window(self) -> tuple[float, float]:
        b = self.boundaries
        return b[2], b[3]


@dataclass(frozen=True)
class TrajectoryKind:
    """Transport trajectory family; ``xi`` (hybridicity) only for ``hybrid``."""

    name: str
    xi: float | None = None

    NAMES = ("linear", "quadratic", "min_jerk", "hybrid")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ValueError(f"unknown trajectory {self.name!r}")
        if self.name == "hybrid":
            if self.xi is None or not 0 <= self.xi <= 1:
                raise ValueError("hybrid trajectory needs 0 <= xi <= 1")
        elif self.xi is not None:
            raise ValueError(f"xi is only defined for hybrid, not {self.name}")

    @property
    def label(self) -> str:
        return f"hybrid_{self.xi:g}" if self.name == "hybrid" else self.name

    @classmethod
    def parse(cls, text: str) -> "TrajectoryKind":
        """Accept ``min_jerk``, ``hybrid_0.4``, ``hybrid(0.4)`` or ``hybrid:0.4``."""
        m = re.fullmatch(r"hybrid[(_:]\s*([0-9.eE+-]+)\s*\)?", text.strip())
        if m:
            return cls("hybrid", float(m.group(1)))
        return cls(text.strip())


def _check_time(t, tau):
    t = np.asarray(t, dtype=float)
    if not tau > 0:
        raise ValueError("tau must be positive")
    if np.any(t < -_T_TOL * tau) or np.any(t > tau * (1 + _T_TOL)):
        raise ValueError("t outside [0, tau]")
    return np.clip(t, 0.0, tau)


def min_jerk_kernel(s, deriv: int = 0):
    """``10 s^3 - 15 s^4 + 6 s^5`` and its derivatives with respect to ``s``."""
    s = np.asarray(s, dtype=float)
    if deriv == 0:
        return s**3 * (10 - 15 * s + 6 * s**2)
    if deriv == 1:
        return 30 * s**2 * (1 - s) ** 2
    if deriv == 2:
        return 60 * s * (1 - s) * (1 - 2 * s)
    if deriv == 3:
        return 60 * (1 - 6 * s + 6 * s**2)
    raise ValueError("deriv must be 0..3")


def traj_linear(d, tau, t):
    t = _check_time(t, tau)
    return d * t / tau


def traj_quadratic(d, tau, t):
    s = _check_time(t, tau) / tau
    return d * np.where(s <= 0.5, 2 * s**2, -2 * s**2 + 4 * s - 1)


def traj_min_jerk(d, tau, t):
    s = _check_time(t, tau) / tau
    return d * min_jerk_kernel(s)


def traj_hybrid(d, tau, xi, t):
    """Minimum-jerk ends joined by a constant-velocity middle of duration ``xi*tau``."""
    if not 0 <= xi <= 1:
        raise ValueError("xi must lie in [0, 1]")
    t = _check_time(t, tau)
    denom = 8 + 7 * xi
    if xi == 1:
        return traj_linear(d, tau, t)
    d_mj = d * 8 * (1 - xi) / denom
    tau_mj = tau * (1 - xi)
    t1 = 0.5 * (1 - xi) * tau
    t2 = 0.5 * (1 + xi) * tau
    head = d_mj * min_jerk_kernel(np.clip(t, 0, tau_mj) / tau_mj)
    middle = d * (15 / denom * t / tau - 7 * (1 - xi) / (2 * denom))
    tail = d_mj * min_jerk_kernel(np.clip(t - tau * xi, 0, tau_mj) / tau_mj) + d * 15 * xi / denom
    return np.where(t <= t1, head, np.where(t <= t2, middle, tail))


def trajectory(kind: TrajectoryKind, d, tau, t):
    if kind.name == "linear":
        return traj_linear(d, tau, t)
    if kind.name == "quadratic":
        return traj_quadratic(d, tau, t)
    if kind.name == "min_jerk":
        return traj_min_jerk(d, tau, t)
    return traj_hybrid(d, tau, kind.xi, t)


def amplitude_schedule(a_max, schedule: StageSchedule, t):
    """Piecewise-linear depth: ramp up, plateau, ramp down, off."""
    t = _check_time(t, schedule.total_time)
    t1, t2, t3, _ = schedule.boundaries
    tc = schedule.transfer_duration
    rise = t / tc
    fall = (t3 - t) / tc
    shape = np.where(t <= t1, rise, np.where(t <= t2, 1.0, np.where(t <= t3, fall, 0.0)))
    return a_max * np.clip(shape, 0.0, 1.0)


def position_schedule(kind: TrajectoryKind, p: PhysicalParams, schedule: StageSchedule, t):
    t = _check_time(t, schedule.total_time)
    t1, t2, _, _ = schedule.boundaries
    tau = schedule.transport_duration
    inside = np.clip(t - t1, 0.0, tau)
    x = trajectory(kind, p.separation, tau, inside)
    return np.where(t <= t1, 0.0, np.where(t >= t2, p.separation, x))


@dataclass
class ControlPulse:
    """Sampled position and depth controls of the moving tweezer.

    Construction enforces the transfer boundary conditions: the tweezer
    starts off at ``x = 0`` and ends off at ``x = d``.
    """

    times: np.ndarray
    positions: np.ndarray
    amplitudes: np.ndarray
    schedule: StageSchedule
    separation: float
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        self.validate()

    def validate(self):
        t, x, a, d = self.times, self.positions, self.amplitudes, self.separation
        if not (t.ndim == 1 and t.shape == x.shape == a.shape and t.size >= 2):
            raise ValueError("times, positions and amplitudes must be equal-length 1-D arrays")
        T = self.schedule.total_time
        if abs(t[0]) > 1e-9 * T or abs(t[-1] - T) > 1e-9 * T:
            raise ValueError("pulse must span [0, T]")
        steps = np.diff(t)
        if np.any(np.abs(steps - T / (t.size - 1)) > 1e-9 * T):
            raise ValueError("pulse sampling must be uniform")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(a))):
            raise ValueError("non-finite control values")
        if np.any(a < 0):
            raise ValueError("amplitudes must be non-negative")
        scale = max(float(a.max()), 1e-300)
        if a[0] > 1e-9 * scale or a[-1] > 1e-9 * scale:
            raise ValueError("tweezer must be off at start and end")
        if abs(x[0]) > 1e-9 * d or abs(x[-1] - d) > 1e-9 * d:
            raise ValueError("tweezer must start at 0 and end at d")

    @property
    def total_time(self) -> float:
        return self.schedule.total_time

    @property
    def n_samples(self) -> int:
        return self.times.size

    def at(self, t):
        """Linear interpolation of both controls at ``t``."""
        return (np.interp(t, self.times, self.positions), np.interp(t, self.times, self.amplitudes))

    def to_csv(self, path):
        write_pulse_csv(self, path)


PULSE_CSV_HEADER = ("t_s", "x_m", "A_J")


def write_pulse_csv(pulse: ControlPulse, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PULSE_CSV_HEADER)
        for row in zip(pulse.times, pulse.positions, pulse.amplitudes):
            w.writerow([repr(float(v)) for v in row])


def read_pulse_csv(path, schedule: StageSchedule, separation: float, label: str = "") -> ControlPulse:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ControlPulse(data[:, 0], data[:, 1], data[:, 2], schedule, separation, label)


def sample_times(schedule: StageSchedule, n_samples: int) -> np.ndarray:
    return np.linspace(0.0, schedule.total_time, n_samples)


def sample_pulse(kind: TrajectoryKind, a_max: float, p: PhysicalParams,
                 schedule: StageSchedule, n_samples: int = 5001) -> ControlPulse:
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    if a_max < 0:
        raise ValueError("a_max must be non-negative")
    t = sample_times(schedule, n_samples)
    return ControlPulse(
        t,
        position_schedule(kind, p, schedule, t),
        amplitude_schedule(a_max, schedule, t),
        schedule,
        p.separation,
        kind.label,
        {"a_max": a_max},
    )
