"""Simulation and control design for single-atom transport between optical tweezers."""
from .evolution import EvolutionConfig, EvolutionRecord, evolve, kinetic_expectation
from .grid import SpatialGrid, WaveFunction, build_grid, lowest_eigenstates
from .metrics import MetricsReport, infidelity, moving_occupation, waiting_stage_stats
from .model import A_EXP, HBAR, PhysicalParams, omega_static, tau_moving, tau_static
from .optimizer import BasisConfig, OptimizerConfig, dcrab_optimize
from .pulses import ControlPulse, StageSchedule, TrajectoryKind, sample_pulse
from .sta import build_sta_approx_pulse, build_sta_pulse, calibrate_capture_depth
from .transport import TransportProblem, build_pulse

__version__ = "0.1.0"

__all__ = [
    "A_EXP", "HBAR", "BasisConfig", "ControlPulse", "EvolutionConfig", "EvolutionRecord",
    "MetricsReport", "OptimizerConfig", "PhysicalParams", "SpatialGrid", "StageSchedule",
    "TrajectoryKind", "TransportProblem", "WaveFunction", "build_grid", "build_pulse",
    "build_sta_approx_pulse", "build_sta_pulse", "calibrate_capture_depth", "dcrab_optimize",
    "evolve", "infidelity", "kinetic_expectation", "lowest_eigenstates", "moving_occupation",
    "omega_static", "sample_pulse", "tau_moving", "tau_static", "waiting_stage_stats",
]
