"""Physical parameters, lab-unit conversion and the Gaussian trap potentials.

Everything inside the package runs in SI units. Trap depths are quoted in
the lab as ``A / hbar`` in units of ``2*pi*MHz``; :class:`UnitConfig`
converts between the two.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants

HBAR = constants.hbar
KB = constants.k

TWO_PI_MHZ = 2.0 * np.pi * 1e6

#: Moving-tweezer depth used throughout the experiments (3.57 x 2pi MHz).
A_EXP = HBAR * TWO_PI_MHZ * 3.57


@dataclass(frozen=True)
class UnitConfig:
    """Scale factors from lab units to SI.

    Depths are given as ``A/hbar`` in ``2*pi*MHz``, lengths in micrometres
    and times in milliseconds.
    """

    depth_scale: float = HBAR * TWO_PI_MHZ
    length_scale: float = 1e-6
    time_scale: float = 1e-3

    def depth_to_si(self, value):
        return np.multiply(value, self.depth_scale)

    def depth_from_si(self, value):
        return np.divide(value, self.depth_scale)

    def length_to_si(self, value):
        return np.multiply(value, self.length_scale)

    def length_from_si(self, value):
        return np.divide(value, self.length_scale)

    def time_to_si(self, value):
        return np.multiply(value, self.time_scale)

    def time_from_si(self, value):
        return np.divide(value, self.time_scale)


LAB_UNITS = UnitConfig()


@dataclass(frozen=True)
class PhysicalParams:
    """Atom and trap parameters (SI).

    The defaults describe a 39K atom between two static tweezers 7 um apart.
    """

    mass: float = 6.47e-26
    a_static: float = HBAR * TWO_PI_MHZ * 0.53
    sigma_static: float = 0.35e-6
    n_static: int = 2
    separation: float = 7e-6
    sigma_moving: float = 0.47e-6

    def __post_init__(self):
        for name in ("mass", "a_static", "sigma_static", "separation", "sigma_moving"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if int(self.n_static) != self.n_static or self.n_static < 1:
            raise ValueError(f"n_static must be an integer >= 1, got {self.n_static!r}")

    @property
    def hbar(self) -> float:
        return HBAR

    @property
    def kb(self) -> float:
        return KB

    @property
    def static_centers(self) -> np.ndarray:
        return np.arange(self.n_static) * self.separation

    @classmethod
    def from_lab(cls, mass, a_static_mhz, sigma_static_um, n_static, separation_um,
                 sigma_moving_um, units: UnitConfig = LAB_UNITS) -> "PhysicalParams":
        return cls(
            mass=float(mass),
            a_static=float(units.depth_to_si(a_static_mhz)),
            sigma_static=float(units.length_to_si(sigma_static_um)),
            n_static=int(n_static),
            separation=float(units.length_to_si(separation_um)),
            sigma_moving=float(units.length_to_si(sigma_moving_um)),
        )


def static_potential(x, p: PhysicalParams):
    """Sum of the static Gaussian wells centred at ``(n-1)*d``."""
    x = np.asarray(x, dtype=float)
    u = (x[..., None] - p.static_centers) / p.sigma_static
    return -p.a_static * np.exp(-0.5 * u**2).sum(axis=-1)


def static_potential_derivs(x, p: PhysicalParams):
    """Analytic first and second derivatives of :func:`static_potential`.

    Returns
    -------
    dv, d2v : ndarray
        ``dV/dx`` in J/m and ``d2V/dx2`` in J/m^2.
    """
    x = np.asarray(x, dtype=float)
    s = p.sigma_static
    u = (x[..., None] - p.static_centers) / s
    g = np.exp(-0.5 * u**2)
    dv = (p.a_static / s) * (u * g).sum(axis=-1)
    d2v = (p.a_static / s**2) * ((1.0 - u**2) * g).sum(axis=-1)
    return dv, d2v


def moving_potential(x, x_mt, a_mt, p: PhysicalParams):
    """Gaussian potential of the moving tweezer with depth ``a_mt`` at ``x_mt``."""
    a_mt = np.asarray(a_mt, dtype=float)
    if np.any(a_mt < 0):
        raise ValueError("moving tweezer depth must be non-negative")
    x = np.asarray(x, dtype=float)
    return -a_mt * np.exp(-0.5 * ((x - x_mt) / p.sigma_moving) ** 2)


def omega_static(p: PhysicalParams) -> float:
    """Harmonic frequency at the bottom of a static well, rad/s."""
    return float(np.sqrt(p.a_static / (p.mass * p.sigma_static**2)))


def tau_static(p: PhysicalParams) -> float:
    return 2.0 * np.pi / omega_static(p)


def omega_moving_max(a_max_cr: float, p: PhysicalParams) -> float:
    """Harmonic frequency of a moving tweezer of depth ``a_max_cr``, rad/s."""
    if a_max_cr < 0:
        raise ValueError("a_max_cr must be non-negative")
    return float(np.sqrt(a_max_cr / (p.mass * p.sigma_moving**2)))


def tau_moving(a_max_cr: float, p: PhysicalParams) -> float:
    w = omega_moving_max(a_max_cr, p)
    return np.inf if w == 0 else 2.0 * np.pi / w


def omega_tilde_sq(a_max_cr: float, p: PhysicalParams) -> float:
    """Squared ratio of moving to static trap frequency."""
    return a_max_cr * p.sigma_static**2 / (p.a_static * p.sigma_moving**2)
