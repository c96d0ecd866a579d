import numpy as np
import pytest

from tweezer_transport import evolution
from tweezer_transport.evolution import (EvolutionConfig, NormDriftError, evolve,
                                         kinetic_expectation)
from tweezer_transport.experiments import static_oscillator_infidelity
from tweezer_transport.grid import (SpatialGrid, WaveFunction, build_grid, harmonic_eigenfunction,
                                    lowest_eigenstates_spectral)
from tweezer_transport.model import HBAR, PhysicalParams, omega_static, static_potential
from tweezer_transport.pulses import ControlPulse, StageSchedule


def idle_pulse(p, total_time, n=1001):
    s = StageSchedule(total_time)
    t = np.linspace(0, total_time, n)
    x = np.where(t < total_time, 0.0, p.separation)  # position is irrelevant while off
    return ControlPulse(t, x, np.zeros(n), s, p.separation)


def reversed_pulse(pulse):
    # the reversed pulse runs d -> 0, so express it in mirrored coordinates
    d = pulse.separation
    return ControlPulse(pulse.times, d - pulse.positions[::-1], pulse.amplitudes[::-1],
                        pulse.schedule, d)


def test_config_validation():
    for kw in ({"n_steps": 10}, {"scheme": "rk4"}, {"record_stride": 0},
               {"occupation_stride": -1}, {"k_states": 0}):
        with pytest.raises(ValueError):
            EvolutionConfig(**kw)
    assert EvolutionConfig().dt(1e-3) == pytest.approx(2e-7)


def test_kinetic_harmonic_ground_state(params):
    g = build_grid(params)
    w = omega_static(params)
    v = 0.5 * params.mass * w**2 * g.x**2
    psi = lowest_eigenstates_spectral(g, v, 1, params.mass).state(0)
    assert kinetic_expectation(psi, g, params) == pytest.approx(HBAR * w / 4, rel=5e-3)


def test_kinetic_gaussian(params):
    g = SpatialGrid(-3e-6, 3e-6, 1200)
    sigma = 0.2e-6
    psi = WaveFunction(np.exp(-g.x**2 / (4 * sigma**2)), g).normalized()
    assert kinetic_expectation(psi, g, params) == pytest.approx(HBAR**2 / (8 * params.mass * sigma**2),
                                                                rel=5e-3)


def test_kinetic_matches_finite_differences(params):
    g = SpatialGrid(-3e-6, 3e-6, 3000)
    w = omega_static(params)
    psi = WaveFunction(harmonic_eigenfunction(0, g.x, w, params.mass), g).normalized()
    a = psi.amplitudes.real
    lap = (np.roll(a, 1) - 2 * a + np.roll(a, -1)) / g.dx**2
    fd = -HBAR**2 / (2 * params.mass) * np.sum(a * lap) * g.dx
    assert kinetic_expectation(psi, g, params) == pytest.approx(fd, rel=1e-6)


def test_free_evolution_keeps_momentum_distribution(params):
    g = SpatialGrid(-10e-6, 10e-6, 1024)
    psi = WaveFunction(np.exp(-g.x**2 / (4 * (0.3e-6) ** 2) + 1j * 2e6 * g.x), g).normalized()
    kin = np.exp(-1j * HBAR * g.wavenumbers**2 / (2 * params.mass) * 1e-6)
    before = np.abs(np.fft.fft(psi.amplitudes)) ** 2
    after = np.abs(np.fft.fft(np.fft.ifft(kin * np.fft.fft(psi.amplitudes)))) ** 2
    assert np.max(np.abs(after - before)) < 1e-12 * before.max()


def test_static_oscillator_splitting_errors(params):
    strang = static_oscillator_infidelity(params, "strang")
    single = static_oscillator_infidelity(params, "single")
    assert strang["mean"] < 1e-6
    assert 3e-5 <= single["mean"] <= 1e-3
    assert single["mean"] / strang["mean"] >= 100


@pytest.mark.parametrize("scheme,band", [("strang", (3.0, 6.0)), ("single", (1.5, 3.0))])
def test_scheme_order(params, scheme, band):
    # sqrt(infidelity) measures the state error, which scales as dt**order
    a = static_oscillator_infidelity(params, scheme, n_steps=2500)["mean"]
    b = static_oscillator_infidelity(params, scheme, n_steps=5000)["mean"]
    ratio = np.sqrt(a / b)
    assert band[0] <= ratio <= band[1]


def test_idle_ground_state_stationary():
    # one well, so the ground state is not mixed with a near-degenerate partner
    p = PhysicalParams(n_static=1)
    g = build_grid(p)
    v = static_potential(g.x, p)
    psi0 = lowest_eigenstates_spectral(g, v, 1, p.mass).state(0)
    _, rec = evolve(psi0, idle_pulse(p, 0.5e-3), g, EvolutionConfig(n_steps=1000), p, target=psi0)
    assert np.nanmax(rec.infidelity) < 1e-6
    assert np.max(np.abs(rec.norm - 1)) < 1e-10


def test_norm_conserved_during_transport(problem):
    pulse = problem.pulse("min_jerk", 0.3e-3)
    _, rec = evolve(problem.source, pulse, problem.grid, EvolutionConfig(record_kinetic=False),
                    problem.p, target=problem.target)
    assert np.max(np.abs(rec.norm - 1)) < 1e-10


def test_time_reversal(problem):
    p, g = problem.p, problem.grid
    pulse = problem.pulse("min_jerk", 0.3e-3)
    cfg = EvolutionConfig(record_stride=5000, record_kinetic=False)
    psi_t, _ = evolve(problem.source, pulse, g, cfg, p)
    # mirror x -> d - x so the reversed protocol is again a 0 -> d pulse
    mirrored = WaveFunction(psi_t.amplitudes.conj()[::-1], g)
    back, _ = evolve(mirrored, reversed_pulse(pulse), g, cfg, p)
    back = WaveFunction(back.amplitudes.conj()[::-1], g)
    assert 1 - abs(back.overlap(problem.source)) ** 2 < 1e-10


def test_strides_and_record_window(problem):
    pulse = problem.pulse("min_jerk", 0.3e-3)
    cfg = EvolutionConfig(record_stride=7, record_kinetic=False)
    _, rec = evolve(problem.source, pulse, problem.grid, cfg, problem.p)
    assert rec.times[0] == 0 and rec.times[-1] == pytest.approx(pulse.total_time)
    assert np.allclose(np.diff(rec.times)[:-1], 7 * cfg.dt(pulse.total_time))
    assert np.all(np.isnan(rec.infidelity))
    lo = pulse.schedule.waiting_window[0]
    _, late = evolve(problem.source, pulse, problem.grid, cfg, problem.p, record_after=lo)
    assert np.all(late.times[1:] >= lo * (1 - 1e-12))


def test_recording_does_not_change_the_state(problem):
    pulse = problem.pulse("hybrid_0.4", 0.3e-3)
    a, _ = evolve(problem.source, pulse, problem.grid, EvolutionConfig(record_stride=1), problem.p)
    b, _ = evolve(problem.source, pulse, problem.grid, EvolutionConfig(record_stride=5000), problem.p)
    assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-10


def test_occupation_hook_called_in_transport(problem):
    pulse = problem.pulse("min_jerk", 0.3e-3)
    seen = []

    def hook(psi, x_mt, a_mt):
        seen.append(a_mt)
        return 0.0, 0.0, 0.0

    _, rec = evolve(problem.source, pulse, problem.grid, EvolutionConfig(occupation_stride=100),
                    problem.p, occupation=hook)
    lo, hi = pulse.schedule.transport_window
    assert len(seen) == np.count_nonzero(np.isfinite(rec.mean_n)) > 0
    assert np.all(np.array(seen) > 0)
    assert np.all((rec.times[np.isfinite(rec.mean_n)] >= lo) & (rec.times[np.isfinite(rec.mean_n)] <= hi))


def test_rejects_bad_initial_state(problem):
    pulse = problem.pulse("min_jerk", 0.3e-3)
    bad = WaveFunction(2 * problem.source.amplitudes, problem.grid)
    with pytest.raises(ValueError):
        evolve(bad, pulse, problem.grid, EvolutionConfig(), problem.p)


def test_norm_drift_reported(problem, monkeypatch):
    monkeypatch.setattr(evolution, "NORM_DRIFT_LIMIT", -1.0)
    pulse = problem.pulse("min_jerk", 0.3e-3)
    with pytest.raises(NormDriftError, match="dt ="):
        evolve(problem.source, pulse, problem.grid, EvolutionConfig(), problem.p)


def test_record_csv(problem, tmp_path):
    pulse = problem.pulse("min_jerk", 0.3e-3)
    _, rec = evolve(problem.source, pulse, problem.grid, EvolutionConfig(record_stride=500),
                    problem.p, target=problem.target)
    rec.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t_s,infidelity,mean_N,delta_N,kinetic_J,norm"
    assert len(lines) == rec.times.size + 1
