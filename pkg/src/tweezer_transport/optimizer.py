"""Dressed random-basis pulse shaping with a Nelder-Mead inner search.

Corrections to a guess pulse are expanded over a few randomly drawn
sigmoid bumps. Each super-iteration draws a fresh basis around the best
pulse found so far and searches only its coefficients.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit

from .pulses import ControlPulse

CONTROLS = ("position", "amplitude")


@dataclass(frozen=True)
class BasisConfig:
    """Random sigmoid basis; ranges are fractions of the control window."""

    n_functions: int = 6
    center_range: tuple[float, float] = (0.05, 0.95)
    width_range: tuple[float, float] = (0.05, 0.5)
    seed: int = 0

    def __post_init__(self):
        if self.n_functions < 0:
            raise ValueError("n_functions must be >= 0")
        for name in ("center_range", "width_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi <= 1:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi <= 1")


@dataclass(frozen=True)
class OptimizerConfig:
    n_superiterations: int = 4
    max_evals_per_si: int = 400
    simplex_init_scale: float = 0.05
    convergence_tol: float = 1e-7
    controls: tuple[str, ...] = CONTROLS
    amplitude_cap: float | None = None

    def __post_init__(self):
        if self.n_superiterations < 0 or self.max_evals_per_si < 0:
            raise ValueError("iteration budgets must be non-negative")
        if not self.simplex_init_scale > 0:
            raise ValueError("simplex_init_scale must be positive")
        if not self.controls or any(c not in CONTROLS for c in self.controls):
            raise ValueError(f"controls must be a non-empty subset of {CONTROLS}")
        if self.amplitude_cap is not None and not self.amplitude_cap > 0:
            raise ValueError("amplitude_cap must be positive")


@dataclass(frozen=True)
class SigmoidBump:
    """Smoothed top-hat on ``s in [0, 1]`` that vanishes with zero slope at both ends."""

    center: float
    width: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self._raw(s) / self._peak

    def _raw(self, s):
        kappa = self.width / 8.0
        lo, hi = self.center - self.width / 2, self.center + self.width / 2
        edge = 16.0 * s**2 * (1.0 - s) ** 2
        inside = (s > 0) & (s < 1)
        return np.where(inside, (expit((s - lo) / kappa) - expit((s - hi) / kappa)) * edge, 0.0)

    @cached_property
    def _peak(self):
        s = np.linspace(0.0, 1.0, 2001)
        return float(self._raw(s).max())


def dress_basis(cfg: BasisConfig, window: tuple[float, float], si_index: int,
                stream: int = 0) -> list[SigmoidBump]:
    """Draw ``cfg.n_functions`` bumps from the stream ``(seed, si_index, stream)``.

    Bumps act on the window-normalised time, so ``window`` only has to be
    non-empty here; :func:`apply_correction` maps real times onto it.
    """
    if not window[1] > window[0]:
        raise ValueError("window must be non-empty")
    rng = np.random.default_rng([cfg.seed, si_index, stream])
    centers = rng.uniform(*cfg.center_range, size=cfg.n_functions)
    widths = rng.uniform(*cfg.width_range, size=cfg.n_functions)
    return [SigmoidBump(float(c), float(w)) for c, w in zip(centers, widths)]


@dataclass
class ControlBasis:
    """Per-control bases for one super-iteration."""

    position: list[SigmoidBump] = field(default_factory=list)
    amplitude: list[SigmoidBump] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.position) + len(self.amplitude)


def control_windows(guess: ControlPulse):
    """Transport window for the position, capture-to-release window for the depth."""
    t1, t2, t3, _ = guess.schedule.boundaries
    return (t1, t2), (0.0, t3)


def dress_controls(bcfg: BasisConfig, ocfg: OptimizerConfig, guess: ControlPulse,
                   si_index: int) -> ControlBasis:
    w_pos, w_amp = control_windows(guess)
    basis = ControlBasis()
    if "position" in ocfg.controls:
        basis.position = dress_basis(bcfg, w_pos, si_index, stream=0)
    if "amplitude" in ocfg.controls:
        basis.amplitude = dress_basis(bcfg, w_amp, si_index, stream=1)
    return basis


def _expand(funcs, coeffs, t, window):
    s = (t - window[0]) / (window[1] - window[0])
    out = np.zeros_like(t)
    for c, f in zip(coeffs, funcs):
        if c != 0.0:
            out += c * f(s)
    return out


def apply_correction(guess: ControlPulse, coeffs, basis: ControlBasis, cfg: OptimizerConfig,
                     amplitude_cap: float | None = None) -> ControlPulse:
    """Add the basis expansion to the guess controls.

    Position coefficients are in units of the separation, amplitude
    coefficients in units of the amplitude cap. The depth is clamped to
    ``[0, cap]`` afterwards.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ValueError(f"expected {basis.size} coefficients, got {coeffs.shape}")
    cap = amplitude_cap or cfg.amplitude_cap or float(guess.amplitudes.max())
    w_pos, w_amp = control_windows(guess)
    n_pos = len(basis.position)
    t = guess.times
    x = guess.positions + guess.separation * _expand(basis.position, coeffs[:n_pos], t, w_pos)
    a = guess.amplitudes + cap * _expand(basis.amplitude, coeffs[n_pos:], t, w_amp)
    a = np.clip(a, 0.0, cap)
    out = ControlPulse(t, x, a, guess.schedule, guess.separation, guess.label,
                       dict(guess.metadata))
    assert out.positions[0] == guess.positions[0] and out.positions[-1] == guess.positions[-1]
    return out


class _Budget(Exception):
    pass


def nelder_mead(f, x0, cfg: OptimizerConfig | None = None, *, max_evals: int | None = None,
                scale: float | None = None, tol: float | None = None, f0: float | None = None):
    """Minimise ``f`` with the reflection/expansion/contraction/shrink simplex.

    Coefficients 1, 2, 0.5, 0.5. The initial simplex is ``x0`` plus
    ``scale`` along each axis. Stops when ``max_evals`` evaluations are used
    or the spread of simplex values drops below ``tol``. ``f0``, if given,
    is taken as ``f(x0)`` without spending an evaluation.

    Returns
    -------
    x_best : ndarray
    f_best : float
    """
    cfg = OptimizerConfig() if cfg is None else cfg
    max_evals = cfg.max_evals_per_si if max_evals is None else max_evals
    scale = cfg.simplex_init_scale if scale is None else scale
    tol = cfg.convergence_tol if tol is None else tol
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if n < 1:
        raise ValueError("dimension must be >= 1")

    used = 0
    best = [x0.copy(), np.inf if f0 is None else float(f0)]

    def fe(x):
        nonlocal used
        if used >= max_evals:
            raise _Budget
        used += 1
        v = float(f(x))
        if v < best[1]:
            best[0], best[1] = x.copy(), v
        return v

    try:
        simplex = [x0.copy()] + [x0 + scale * np.eye(n)[i] for i in range(n)]
        fvals = [best[1] if f0 is not None else fe(x0)]
        fvals += [fe(x) for x in simplex[1:]]
        while True:
            order = np.argsort(fvals, kind="stable")
            simplex = [simplex[i] for i in order]
            fvals = [fvals[i] for i in order]
            if fvals[-1] - fvals[0] < tol:
                break
            centroid = np.mean(simplex[:-1], axis=0)
            worst = simplex[-1]
            xr = centroid + (centroid - worst)
            fr = fe(xr)
            if fr < fvals[0]:
                xe = centroid + 2.0 * (xr - centroid)
                fe_ = fe(xe)
                simplex[-1], fvals[-1] = (xe, fe_) if fe_ < fr else (xr, fr)
                continue
            if fr < fvals[-2]:
                simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = fe(xc)
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (worst - centroid)
                fc = fe(xc)
                accept = fc < fvals[-1]
            if accept:
                simplex[-1], fvals[-1] = xc, fc
                continue
            for i in range(1, n + 1):
                simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                fvals[i] = fe(simplex[i])
    except _Budget:
        pass
    return best[0], best[1]


@dataclass
class OptimizationResult:
    best_pulse: ControlPulse
    best_objective: float
    guess_objective: float
    objective_history: np.ndarray
    evaluations_used: int
    seed_chain: list
    si_objectives: list
    failures: list = field(default_factory=list)
    configs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "best_objective": self.best_objective,
            "guess_objective": self.guess_objective,
            "objective_history": [float(v) for v in self.objective_history],
            "evaluations_used": self.evaluations_used,
            "seed_chain": [list(s) for s in self.seed_chain],
            "si_objectives": [float(v) for v in self.si_objectives],
            "failures": self.failures,
            "configs": self.configs,
            "pulse_label": self.best_pulse.label,
            "total_time_s": self.best_pulse.total_time,
        }

    def save(self, directory, stem: str = "optimization"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{stem}.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        self.best_pulse.to_csv(directory / f"{stem}_best_pulse.csv")


def _jsonable(cfg):
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def dcrab_optimize(guess: ControlPulse, objective, bcfg: BasisConfig | None = None,
                   ocfg: OptimizerConfig | None = None) -> OptimizationResult:
    """Refine ``guess`` by super-iterated random-basis Nelder-Mead.

    ``objective(pulse) -> float`` is minimised. Exceptions raised by it
    score 1.0 and are logged in ``failures``.
    """
    bcfg = BasisConfig() if bcfg is None else bcfg
    ocfg = OptimizerConfig() if ocfg is None else ocfg
    cap = ocfg.amplitude_cap or float(guess.amplitudes.max())
    history: list[float] = []
    failures: list[str] = []

    def score(pulse):
        try:
            v = float(objective(pulse))
            if not np.isfinite(v):
                raise FloatingPointError("non-finite objective")
        except Exception as exc:  # keep the search alive
            failures.append(f"{type(exc).__name__}: {exc}")
            v = 1.0
        history.append(v)
        return v

    best_pulse = guess
    best_obj = score(guess)
    guess_obj = best_obj
    seeds, si_obj = [], []
    for si in range(ocfg.n_superiterations):
        basis = dress_controls(bcfg, ocfg, best_pulse, si)
        seeds.append((bcfg.seed, si))
        if basis.size == 0 or ocfg.max_evals_per_si == 0:
            si_obj.append(best_obj)
            continue
        base = best_pulse

        def f(c, base=base, basis=basis):
            return score(apply_correction(base, c, basis, ocfg, cap))

        x, fx = nelder_mead(f, np.zeros(basis.size), ocfg, f0=best_obj)
        if fx < best_obj:
            best_pulse = apply_correction(base, x, basis, ocfg, cap)
            best_obj = fx
        si_obj.append(best_obj)
    return OptimizationResult(
        best_pulse, best_obj, guess_obj, np.array(history), len(history), seeds, si_obj,
        failures, {"basis": _jsonable(bcfg), "optimizer": _jsonable(ocfg), "amplitude_cap": cap})
