"""Covert-link simulation with an intelligent reflecting surface.

Simulates a transmitter-receiver pair assisted by a phase-shifting surface
while a warden runs a threshold detector under bounded noise-power
uncertainty, and optimizes transmit power and phases for covert rate.
"""

from .specfun import NoiseUncertaintyModel, expint_ei, lambert_w0, lambert_wm1, logu_cdf, logu_sample
from .channel import (
    ChannelRealization,
    IrsConfiguration,
    Scenario,
    covert_rate,
    effective_amplitude,
    pathloss_amplitude,
    sample_realization,
)
from .detector import (
    DegenerateModelError,
    DetectionOutcome,
    WardenModel,
    covertness_check,
    expected_pmd_apriori,
    expected_total_error,
    max_covert_leakage,
    optimal_threshold,
    pfa,
    pmd_actual,
)
from .optimizer import (
    SolveOptions,
    SolveResult,
    align_phases,
    solve_joint,
    solve_no_irs,
    solve_phases_constrained,
)
from .montecarlo import ExperimentResult, ExperimentSpec, PointStats, run_point, run_sweep

__version__ = "0.1.0"

__all__ = [
    "NoiseUncertaintyModel",
    "expint_ei",
    "lambert_w0",
    "lambert_wm1",
    "logu_cdf",
    "logu_sample",
    "ChannelRealization",
    "IrsConfiguration",
    "Scenario",
    "covert_rate",
    "effective_amplitude",
    "pathloss_amplitude",
    "sample_realization",
    "DegenerateModelError",
    "DetectionOutcome",
    "WardenModel",
    "covertness_check",
    "expected_pmd_apriori",
    "expected_total_error",
    "max_covert_leakage",
    "optimal_threshold",
    "pfa",
    "pmd_actual",
    "SolveOptions",
    "SolveResult",
    "align_phases",
    "solve_joint",
    "solve_no_irs",
    "solve_phases_constrained",
    "ExperimentResult",
    "ExperimentSpec",
    "PointStats",
    "run_point",
    "run_sweep",
    "__version__",
]
