"""Shortcut-to-adiabaticity controls that account for the static traps.

The moving plus static potential is truncated to a time-dependent harmonic
oscillator with frequency ``omega(t)`` centred at ``x0(t)``. Choosing the
auxiliary functions ``alpha`` (a classical trajectory) and ``rho`` (a
scaling factor) as minimum-jerk polynomials stage by stage fixes
``omega**2`` and ``x0``; the controls follow by inverting the truncation:

    x0  = x_mt - V_st'(x_mt) / (m omega**2)
    A_mt = sigma_mt**2 * (m omega**2 - V_st''(x_mt))
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PhysicalParams, omega_static, omega_tilde_sq, static_potential_derivs
from .pulses import ControlPulse, StageSchedule, _check_time, min_jerk_kernel, sample_times


class STAConstructionError(ValueError):
    """The reverse-engineered controls are unphysical for these parameters."""

    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} (at t = {time:.6g} s)"
        super().__init__(message)
        self.time = time


def alpha_of_t(p: PhysicalParams, schedule: StageSchedule, t, deriv: int = 0):
    """Classical trajectory: at rest, min-jerk over the transport window, at rest."""
    t = _check_time(t, schedule.total_time)
    t1, t2, _, _ = schedule.boundaries
    tau = schedule.transport_duration
    s = np.clip((t - t1) / tau, 0.0, 1.0)
    inside = (t > t1) & (t < t2)
    value = p.separation * min_jerk_kernel(s, deriv) / tau**deriv
    if deriv == 0:
        return value
    return np.where(inside, value, 0.0)


def rho_plateau(a_max_cr: float, p: PhysicalParams) -> float:
    return (omega_tilde_sq(a_max_cr, p) + 1.0) ** -0.25


def rho_of_t(p: PhysicalParams, a_max_cr: float, schedule: StageSchedule, t,
             deriv: int = 0, omega0: float | None = None):
    """Scaling factor, min-jerk between 1 and the plateau value in capture/release.

    Values carry the prefactor ``sqrt(omega0 / omega_st)``; with the default
    ``omega0 = omega_st`` the prefactor is 1.
    """
    if not a_max_cr > 0:
        raise ValueError("a_max_cr must be positive")
    t = _check_time(t, schedule.total_time)
    w_st = omega_static(p)
    omega0 = w_st if omega0 is None else omega0
    scale = np.sqrt(omega0 / w_st)
    t1, t2, t3, _ = schedule.boundaries
    tc = schedule.transfer_duration
    r_p = rho_plateau(a_max_cr, p)
    s_up = np.clip(t / tc, 0.0, 1.0)
    s_dn = np.clip((t - t2) / tc, 0.0, 1.0)
    if deriv == 0:
        up = 1.0 + (r_p - 1.0) * min_jerk_kernel(s_up)
        dn = r_p - (r_p - 1.0) * min_jerk_kernel(s_dn)
        value = np.where(t <= t1, up, np.where(t <= t2, r_p, np.where(t <= t3, dn, 1.0)))
    else:
        up = (r_p - 1.0) * min_jerk_kernel(s_up, deriv) / tc**deriv
        dn = -(r_p - 1.0) * min_jerk_kernel(s_dn, deriv) / tc**deriv
        value = np.where(t < t1, up, np.where(t <= t2, 0.0, np.where(t < t3, dn, 0.0)))
    return scale * value


def omega_sq_of_t(rho, rho_ddot, omega0: float, times=None):
    """``omega0**2 / rho**4 - rho'' / rho``; rejects a non-positive result."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise STAConstructionError("rho must stay positive")
    w2 = omega0**2 / rho**4 - np.asarray(rho_ddot, dtype=float) / rho
    bad = np.flatnonzero(~(w2 > 0))
    if bad.size:
        when = None if times is None else float(np.asarray(times)[bad[0]])
        raise STAConstructionError("effective trap frequency squared is not positive", when)
    return w2


def x0_of_t(alpha, alpha_ddot, omega_sq):
    omega_sq = np.asarray(omega_sq, dtype=float)
    if np.any(omega_sq <= 0):
        raise STAConstructionError("omega**2 must be positive")
    return np.asarray(alpha_ddot) / omega_sq + np.asarray(alpha)


def _root_function(x, x0, omega_sq, p):
    dv, d2v = static_potential_derivs(x, p)
    m_w2 = p.mass * omega_sq
    return x - dv / m_w2 - x0, 1.0 - d2v / m_w2


def solve_x_mt(x0, omega_sq, p: PhysicalParams, max_iter: int = 200, times=None):
    """Tweezer position whose harmonic truncation is centred at ``x0``.

    Safeguarded Newton: each Newton step is accepted only if it stays inside
    the current sign-change bracket, otherwise the bracket is bisected. The
    initial bracket is ``x0 -/+ sigma_st``, widened once to ``2 sigma_st``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    omega_sq = np.broadcast_to(np.asarray(omega_sq, dtype=float), x0.shape)
    if np.any(omega_sq <= 0):
        raise STAConstructionError("omega**2 must be positive")
    tol = 1e-12 * p.separation
    sig = p.sigma_static

    lo, hi = x0 - sig, x0 + sig
    g_lo, _ = _root_function(lo, x0, omega_sq, p)
    g_hi, _ = _root_function(hi, x0, omega_sq, p)
    nobracket = (g_lo > 0) | (g_hi < 0)
    if np.any(nobracket):
        lo = np.where(nobracket, x0 - 2 * sig, lo)
        hi = np.where(nobracket, x0 + 2 * sig, hi)
        g_lo, _ = _root_function(lo, x0, omega_sq, p)
        g_hi, _ = _root_function(hi, x0, omega_sq, p)
        bad = np.flatnonzero((g_lo > 0) | (g_hi < 0))
        if bad.size:
            i = bad[0]
            when = None if times is None else float(np.asarray(times)[i])
            raise STAConstructionError(
                f"no sign change for x_mt near x0={x0[i]:.6g} m "
                f"(g(lo)={g_lo[i]:.3g}, g(hi)={g_hi[i]:.3g})", when)

    x = x0.copy()
    g, dg = _root_function(x, x0, omega_sq, p)
    for _ in range(max_iter):
        done = np.abs(g) < tol
        if np.all(done):
            break
        lo = np.where(g < 0, x, lo)
        hi = np.where(g > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - g / dg
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        x_new = np.where(ok, newton, 0.5 * (lo + hi))
        x = np.where(done, x, x_new)
        g, dg = _root_function(x, x0, omega_sq, p)
    else:
        i = int(np.argmax(np.abs(g)))
        when = None if times is None else float(np.asarray(times)[i])
        raise STAConstructionError(f"x_mt solve did not converge, residual {g[i]:.3g} m", when)
    return x


def amplitude_from_curvature(x_mt, omega_sq, p: PhysicalParams, times=None):
    """Moving-tweezer depth that yields curvature ``m omega**2`` at ``x_mt``.

    Tiny negative results from rounding (above ``-1e-9 A_st``) are clamped
    to zero; anything more negative is an invalid construction.
    """
    _, d2v = static_potential_derivs(x_mt, p)
    a = p.sigma_moving**2 * (p.mass * np.asarray(omega_sq) - d2v)
    floor = 1e-9 * p.a_static
    bad = np.flatnonzero(a < -floor)
    if bad.size:
        when = None if times is None else float(np.asarray(times)[bad[0]])
        raise STAConstructionError(f"negative tweezer depth {a.flat[bad[0]]:.3g} J", when)
    return np.where(np.abs(a) <= floor, 0.0, np.maximum(a, 0.0))


@dataclass
class STAConstruction:
    """Sampled intermediate quantities of the reverse-engineering pipeline."""

    times: np.ndarray
    alpha: np.ndarray
    alpha_ddot: np.ndarray
    rho: np.ndarray
    rho_ddot: np.ndarray
    omega_sq: np.ndarray
    x0: np.ndarray
    x_mt: np.ndarray
    a_mt: np.ndarray
    omega0: float
    omega_tilde_sq: float
    a_max_cr: float

    @property
    def global_max(self) -> float:
        return float(self.a_mt.max())


def sta_controls(p: PhysicalParams, a_max_cr: float, schedule: StageSchedule, t,
                 omega0: float | None = None) -> STAConstruction:
    """Evaluate the full construction at arbitrary times ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    omega0 = omega_static(p) if omega0 is None else float(omega0)
    alpha = alpha_of_t(p, schedule, t)
    alpha_dd = alpha_of_t(p, schedule, t, deriv=2)
    rho = rho_of_t(p, a_max_cr, schedule, t, omega0=omega0)
    rho_dd = rho_of_t(p, a_max_cr, schedule, t, deriv=2, omega0=omega0)
    w2 = omega_sq_of_t(rho, rho_dd, omega0, times=t)
    x0 = x0_of_t(alpha, alpha_dd, w2)
    x_mt = solve_x_mt(x0, w2, p, times=t)
    a_mt = amplitude_from_curvature(x_mt, w2, p, times=t)
    return STAConstruction(t, alpha, alpha_dd, rho, rho_dd, w2, x0, x_mt, a_mt,
                           omega0, omega_tilde_sq(a_max_cr, p), a_max_cr)


def build_sta_pulse(p: PhysicalParams, a_max_cr: float, schedule: StageSchedule,
                    n_samples: int = 5001, omega0: float | None = None):
    """Sampled STA pulse and the construction it came from."""
    if not a_max_cr > 0:
        raise ValueError("a_max_cr must be positive")
    t = sample_times(schedule, n_samples)
    c = sta_controls(p, a_max_cr, schedule, t, omega0)
    x = c.x_mt.copy()
    x[0], x[-1] = 0.0, p.separation
    a = c.a_mt.copy()
    a[0] = a[-1] = 0.0
    pulse = ControlPulse(t, x, a, schedule, p.separation, "sta",
                         {"a_max_cr": a_max_cr, "omega_tilde_sq": c.omega_tilde_sq,
                          "global_max": float(a.max())})
    return pulse, c


def approx_x_mt(x0, omega_sq, p: PhysicalParams):
    """Closed-form position using a parabolic static potential between the wells."""
    m_w2 = p.mass * np.asarray(omega_sq, dtype=float)
    a, d = p.a_static, p.separation
    return (np.asarray(x0) + 4 * a / (d * m_w2)) / (1 + 8 * a / (d**2 * m_w2))


def transport_correction_coefficients(p: PhysicalParams, a_max_cr: float, transport_time: float):
    """Size of the three corrections to the min-jerk shape in the closed-form position.

    Returns the coefficient of the acceleration term and the offset term in
    the numerator, and the correction in the denominator.
    """
    m_w2 = p.a_static / p.sigma_static**2 + a_max_cr / p.sigma_moving**2
    w2 = m_w2 / p.mass
    return (60.0 / (transport_time**2 * w2),
            4 * p.a_static / (p.separation**2 * m_w2),
            8 * p.a_static / (p.separation**2 * m_w2))


def approx_x_mt_transport(p: PhysicalParams, a_max_cr: float, schedule: StageSchedule, t):
    """Closed-form position during the transport window."""
    t = _check_time(t, schedule.total_time)
    t1, _, _, _ = schedule.boundaries
    tau = schedule.transport_duration
    s = np.clip((t - t1) / tau, 0.0, 1.0)
    c_acc, c_off, c_den = transport_correction_coefficients(p, a_max_cr, tau)
    num = min_jerk_kernel(s) + c_acc * (s - 3 * s**2 + 2 * s**3) + c_off
    return p.separation * num / (1 + c_den)


def approx_transport_path(p: PhysicalParams, a_max_cr: float, schedule: StageSchedule,
                          n_samples: int = 20001):
    """Times and closed-form positions sampled over the transport window only."""
    t1, t2, _, _ = schedule.boundaries
    t = np.linspace(t1, t2, n_samples)
    return t, approx_x_mt_transport(p, a_max_cr, schedule, t)


def approx_max_amplitude(a_max_cr: float, p: PhysicalParams) -> float:
    """Estimated global maximum of the STA depth."""
    if a_max_cr < 0:
        raise ValueError("a_max_cr must be non-negative")
    offset = p.a_static * (1 + 2 * np.exp(-1.5)) * p.sigma_moving**2 / p.sigma_static**2
    return a_max_cr + offset


def build_sta_approx_pulse(p: PhysicalParams, a_max_cr: float, schedule: StageSchedule,
                           n_samples: int = 5001) -> ControlPulse:
    """STA pulse with the closed-form position in the transport window.

    Outside transport the tweezer sits at 0 or ``d``; the depth follows from
    the curvature relation at the approximate position.
    """
    t = sample_times(schedule, n_samples)
    c = sta_controls(p, a_max_cr, schedule, t)
    t1, t2, _, _ = schedule.boundaries
    inside = (t > t1) & (t < t2)
    x = np.where(t <= t1, 0.0, p.separation)
    x = np.where(inside, approx_x_mt(c.x0, c.omega_sq, p), x)
    a = amplitude_from_curvature(x, c.omega_sq, p, times=t)
    a[0] = a[-1] = 0.0
    return ControlPulse(t, x, a, schedule, p.separation, "sta_approx",
                        {"a_max_cr": a_max_cr, "omega_tilde_sq": c.omega_tilde_sq,
                         "global_max": float(a.max())})


def calibrate_capture_depth(target_global_max: float, p: PhysicalParams,
                            schedule: StageSchedule | None = None, n_samples: int = 5001,
                            rtol: float = 5e-3, max_iter: int = 60) -> float:
    """Capture depth whose STA pulse peaks at ``target_global_max``.

    Starts from the inverse of :func:`approx_max_amplitude` and, when a
    schedule is given, bisects on the sampled maximum of the built pulse.
    """
    offset = approx_max_amplitude(0.0, p)
    if not target_global_max > offset:
        raise ValueError(
            f"target {target_global_max:.3g} J does not exceed the static offset {offset:.3g} J")
    guess = target_global_max - offset
    if schedule is None:
        return guess

    def peak(a):
        return build_sta_pulse(p, a, schedule, n_samples)[1].global_max

    if abs(peak(guess) - target_global_max) <= rtol * target_global_max:
        return guess
    lo, hi = 1e-6 * guess, target_global_max
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        value = peak(mid)
        if abs(value - target_global_max) <= rtol * target_global_max:
            return mid
        if value > target_global_max:
            hi = mid
        else:
            lo = mid
    raise STAConstructionError("capture depth calibration did not converge")
