"""Spatial grids, finite-difference Hamiltonians and stationary states."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import next_fast_len
from scipy.linalg import LinAlgError, circulant, eigh, eigh_tridiagonal
from scipy.optimize import least_squares
from scipy.special import eval_hermite, gammaln

from .model import HBAR, PhysicalParams, omega_static

DEFAULT_PADDING = 2e-6
DEFAULT_DX = 0.02e-6
MAX_GRID_POINTS = 1 << 20


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid including both end points.

    ``dx = (x_max - x_min) / (n_points - 1)``. The propagator treats the grid
    as periodic with period ``n_points * dx``.
    """

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 64:
            raise ValueError("n_points must be >= 64")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def k_max(self) -> float:
        return np.pi / self.dx


@dataclass
class WaveFunction:
    amplitudes: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.grid.n_points,):
            raise ValueError("amplitudes must match the grid size")

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx)

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.amplitudes / np.sqrt(self.norm()), self.grid)

    def overlap(self, other: "WaveFunction") -> complex:
        if other.grid != self.grid:
            raise ValueError("wave functions live on different grids")
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx)


@dataclass
class EigenResult:
    """Lowest eigenpairs; ``states[i]`` is normalised with ``sum |phi|^2 dx = 1``."""

    energies: np.ndarray
    states: np.ndarray
    grid: SpatialGrid

    def state(self, i: int) -> WaveFunction:
        return WaveFunction(self.states[i], self.grid)


def build_grid(p: PhysicalParams, padding: float = DEFAULT_PADDING,
               dx_target: float = DEFAULT_DX, max_points: int = MAX_GRID_POINTS) -> SpatialGrid:
    """Grid covering all static wells plus ``padding`` on each side.

    The point count is rounded up to an FFT-friendly size, so the actual
    spacing never exceeds ``dx_target``.
    """
    if not padding > 0:
        raise ValueError("padding must be positive")
    if not dx_target > 0:
        raise ValueError("dx_target must be positive")
    x_min = -padding
    x_max = (p.n_static - 1) * p.separation + padding
    n_min = int(np.ceil((x_max - x_min) / dx_target - 1e-9)) + 1
    n = next_fast_len(max(n_min, 64))
    if n > max_points:
        raise ValueError(f"grid of {n} points exceeds the cap of {max_points}")
    return SpatialGrid(x_min, x_max, n)


def hamiltonian_tridiagonal(grid: SpatialGrid, potential, mass: float):
    """Three-point finite-difference Hamiltonian with Dirichlet edges.

    Returns the main diagonal and the (constant) off-diagonal.
    """
    potential = np.asarray(potential, dtype=float)
    t = HBAR**2 / (2.0 * mass * grid.dx**2)
    diag = 2.0 * t + potential
    off = np.full(grid.n_points - 1, -t)
    return diag, off


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude sample of each column positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def lowest_eigenstates(grid: SpatialGrid, potential, k: int, mass: float) -> EigenResult:
    if not 1 <= k <= grid.n_points:
        raise ValueError(f"k must be in [1, {grid.n_points}], got {k}")
    diag, off = hamiltonian_tridiagonal(grid, potential, mass)
    try:
        energies, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    except LinAlgError as exc:
        raise EigensolverError(
            f"tridiagonal eigensolver failed for n={grid.n_points}, k={k}: {exc}") from exc
    vecs = _fix_sign(vecs) / np.sqrt(grid.dx)
    return EigenResult(energies, np.ascontiguousarray(vecs.T), grid)


def ground_state(grid: SpatialGrid, potential, mass: float) -> WaveFunction:
    return lowest_eigenstates(grid, potential, 1, mass).state(0)


def spectral_hamiltonian(grid: SpatialGrid, potential, mass: float) -> np.ndarray:
    """Dense Hamiltonian with the periodic Fourier kinetic energy of the propagator."""
    ek = HBAR**2 * grid.wavenumbers**2 / (2.0 * mass)
    kin = circulant(np.fft.ifft(ek).real)
    return kin + np.diag(np.asarray(potential, dtype=float))


def lowest_eigenstates_spectral(grid: SpatialGrid, potential, k: int, mass: float) -> EigenResult:
    """Like :func:`lowest_eigenstates` but stationary under the split-step kinetic term.

    Dense, so meant for a handful of reference states rather than bases.
    """
    if not 1 <= k <= grid.n_points:
        raise ValueError(f"k must be in [1, {grid.n_points}], got {k}")
    try:
        energies, vecs = eigh(spectral_hamiltonian(grid, potential, mass),
                              subset_by_index=(0, k - 1))
    except LinAlgError as exc:
        raise EigensolverError(f"dense eigensolver failed for n={grid.n_points}: {exc}") from exc
    vecs = _fix_sign(vecs) / np.sqrt(grid.dx)
    return EigenResult(energies, np.ascontiguousarray(vecs.T), grid)


def bound_state_count(grid: SpatialGrid, potential, mass: float,
                      reference_depth: float | None = None) -> int:
    """Number of eigenvalues strictly below zero.

    The count is only meaningful when the grid resolves the momentum
    ``sqrt(2 m |V_min|) / hbar`` of the shallowest bound states; a warning
    is issued when ``k dx > 1``.
    """
    potential = np.asarray(potential, dtype=float)
    vmin = float(potential.min())
    k_depth = np.sqrt(2.0 * mass * abs(vmin)) / HBAR
    if k_depth * grid.dx > 1.0:
        warnings.warn(f"grid too coarse for levels near the well depth (k dx = {k_depth * grid.dx:.2f})",
                      RuntimeWarning, stacklevel=2)
    ref = abs(vmin) if reference_depth is None else reference_depth
    edge = max(abs(potential[0]), abs(potential[-1]))
    if ref > 0 and edge > 1e-3 * ref:
        warnings.warn(f"potential at grid edge is {edge:.3g} J; box states may be counted",
                      RuntimeWarning, stacklevel=2)
    if vmin >= 0:
        return 0
    diag, off = hamiltonian_tridiagonal(grid, potential, mass)
    energies = eigh_tridiagonal(diag, off, eigvals_only=True, select="v",
                                select_range=(vmin - abs(vmin), 0.0))
    return int(np.count_nonzero(energies < 0))


def oscillator_level_count(depth: float, omega: float) -> float:
    """Harmonic estimate ``depth / (hbar * omega)`` of the levels a well holds."""
    return depth / (HBAR * omega)


def harmonic_eigenfunction(n: int, x, omega: float, mass: float, center: float = 0.0):
    """Normalised n-th eigenfunction of a harmonic oscillator."""
    length = np.sqrt(HBAR / (mass * omega))
    xi = (np.asarray(x, dtype=float) - center) / length
    log_norm = -0.5 * (n * np.log(2.0) + gammaln(n + 1)) - 0.25 * np.log(np.pi * length**2)
    return np.exp(log_norm - 0.5 * xi**2) * eval_hermite(n, xi)


@dataclass
class DiscretizationStudy:
    dx: np.ndarray
    errors: np.ndarray
    a: float
    b: float
    c: float
    residuals: np.ndarray = field(repr=False)

    def model(self, dx_um):
        dx_um = np.asarray(dx_um, dtype=float)
        return self.a * dx_um**self.b / (1.0 + self.c * dx_um)


def eigenfunction_rms_error(grid: SpatialGrid, p: PhysicalParams, n_states: int = 1,
                            omega: float | None = None, center: float = 0.0) -> float:
    """RMS over grid points between unit-normalised numerical and exact HO states."""
    omega = omega_static(p) if omega is None else omega
    x = grid.x
    v = 0.5 * p.mass * omega**2 * (x - center) ** 2
    res = lowest_eigenstates(grid, v, n_states, p.mass)
    errs = []
    for n in range(n_states):
        num = res.states[n] * np.sqrt(grid.dx)
        ex = harmonic_eigenfunction(n, x, omega, p.mass, center)
        ex = ex / np.linalg.norm(ex)
        ex *= np.sign(ex[np.argmax(np.abs(ex))])
        errs.append(np.sqrt(np.mean((num - ex) ** 2)))
    return float(np.sqrt(np.mean(np.square(errs))))


def discretization_error_study(dx_values, p: PhysicalParams | None = None,
                               padding: float = DEFAULT_PADDING, n_states: int = 1,
                               omega: float | None = None) -> DiscretizationStudy:
    """Fit ``E = a dx^b / (1 + c dx)`` (dx in um) to harmonic eigenfunction errors.

    Each grid is built like the simulation grid, so the RMS is taken over the
    same span the propagator uses. The fit is done on ``log E`` with ``c >= 0``.
    """
    p = PhysicalParams() if p is None else p
    dx_values = np.sort(np.asarray(dx_values, dtype=float))
    if dx_values.size < 6:
        raise ValueError("need at least 6 dx values")
    if dx_values[-1] < 10 * dx_values[0] * (1 - 1e-9):
        raise ValueError("dx values must span at least a decade")
    grids = [build_grid(p, padding, dx) for dx in dx_values]
    dx_actual = np.array([g.dx for g in grids])
    errors = np.array([eigenfunction_rms_error(g, p, n_states, omega) for g in grids])
    x_um = dx_actual * 1e6
    log_e = np.log(errors)

    def resid(q):
        return q[0] + q[1] * np.log(x_um) - np.log1p(q[2] * x_um) - log_e

    fit = least_squares(resid, x0=[0.0, 2.0, 1.0], bounds=([-np.inf, 0.0, 0.0], [np.inf, 10.0, 1e4]))
    if not fit.success:
        raise RuntimeError(f"discretization fit failed: {fit.message}")
    jac = fit.jac
    if np.linalg.matrix_rank(jac) < 2:
        raise RuntimeError("discretization fit is singular")
    a, b, c = float(np.exp(fit.x[0])), float(fit.x[1]), float(fit.x[2])
    return DiscretizationStudy(dx_actual, errors, a, b, c, fit.fun)
