"""Monte Carlo experiment driver with deterministic substreams.

Seeds are derived with a splitmix64 chain: realization ``r`` always draws
from ``substream_seed(seed, r)``, and every sweep point reuses the same
base seed (common random numbers), so curves over a sweep are paired
comparisons and reordering or subsetting the value list never changes a
point's result.  Whether the surface is enabled is deliberately left out
of the mix, so IRS and no-IRS runs see paired channel draws too.

Reported rates carry the transmit-probability weighting (the transmitter
is silent otherwise); per-realization solver outputs are unweighted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import optimizer
from .channel import Scenario, sample_realization
from .optimizer import SolveOptions
from .specfun import NoiseUncertaintyModel

_MASK64 = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15

SWEEP_PARAMETERS = ("p_max", "d", "n_units", "rho")


def _splitmix64(x: int) -> int:
    x = (x + _SM_GAMMA) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def substream_seed(seed: int, token: int) -> int:
    """Child seed for ``token`` under ``seed`` (splitmix64 chain)."""
    return _splitmix64(_splitmix64(seed & _MASK64) ^ (token & _MASK64))


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: a base scenario, the varied parameter, and run bookkeeping."""

    scenario: Scenario
    sweep_parameter: str
    sweep_values: tuple
    realizations: int
    seed: int
    with_irs: bool = True
    solver: SolveOptions = SolveOptions()

    def __post_init__(self):
        if self.sweep_parameter not in SWEEP_PARAMETERS:
            raise ValueError(
                f"sweep_parameter must be one of {SWEEP_PARAMETERS}, got {self.sweep_parameter!r}"
            )
        vals = tuple(float(v) for v in self.sweep_values)
        if len(vals) == 0:
            raise ValueError("sweep_values must not be empty")
        if not all(np.isfinite(vals)):
            raise ValueError("sweep_values must be finite")
        diffs = np.diff(vals)
        if len(vals) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("sweep_values must be strictly monotone")
        object.__setattr__(self, "sweep_values", vals)
        for v in vals:
            apply_sweep_value(self.scenario, self.sweep_parameter, v)
        if self.realizations < 1:
            raise ValueError(f"realizations must be >= 1, got {self.realizations!r}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed!r}")


@dataclass(frozen=True)
class PointStats:
    """Aggregates for one sweep point."""

    mean_rate: float
    std_err: float
    feasibility_rate: float
    mean_pa: float
    seed: int
    realizations: int
    sweep_value: float | None = None


@dataclass(frozen=True)
class ExperimentResult:
    """Sweep output: the spec echoed back, per-point stats, solver hash."""

    spec: ExperimentSpec
    points: tuple
    solver_hash: str


def solver_options_hash(solver: SolveOptions) -> str:
    blob = json.dumps(asdict(solver), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def apply_sweep_value(scenario: Scenario, parameter: str, value: float) -> Scenario:
    """Scenario for one sweep point.

    ``d`` moves Bob to (d, 0) and the surface to (d/2, 0); the other
    parameters substitute directly.
    """
    if parameter == "p_max":
        if value < 0.0:
            raise ValueError(f"p_max sweep values must be >= 0, got {value!r}")
        return replace(scenario, p_max=float(value))
    if parameter == "d":
        if not value > 0.0:
            raise ValueError(f"d sweep values must be positive, got {value!r}")
        return replace(scenario, pos_bob=(float(value), 0.0), pos_irs=(float(value) / 2.0, 0.0))
    if parameter == "n_units":
        if value < 0 or value != int(value):
            raise ValueError(f"n_units sweep values must be nonnegative integers, got {value!r}")
        return replace(scenario, n_units=int(value))
    if parameter == "rho":
        if value < 1.0:
            raise ValueError(f"rho sweep values must be >= 1, got {value!r}")
        return replace(scenario, noise=NoiseUncertaintyModel(scenario.noise.sigma2_n, float(value)))
    raise ValueError(f"unknown sweep parameter {parameter!r}")


def run_point(
    scenario: Scenario,
    realizations: int,
    seed: int,
    with_irs: bool,
    solver: SolveOptions,
    table_cache: dict | None = None,
) -> PointStats:
    """Solve ``realizations`` independent draws and aggregate.

    Equivalent to looping solve_joint / solve_no_irs over the draws; the
    batch path shares detector tables and the compiled kernel across
    realizations but computes identical per-draw results.
    """
    if realizations < 1:
        raise ValueError(f"realizations must be >= 1, got {realizations!r}")
    reals = []
    for r in range(realizations):
        try:
            rng = np.random.default_rng(substream_seed(seed, r))
            reals.append(sample_realization(scenario, rng))
        except ValueError as exc:
            raise type(exc)(f"substream {r}: {exc}") from exc
    u, v, db, dw = optimizer._stack_cascades(reals, with_irs=with_irs)
    res = optimizer._batch_joint(u, v, db, dw, scenario, solver, table_cache)
    rates = np.empty(realizations, dtype=np.float64)
    pas = np.empty(realizations, dtype=np.float64)
    for r in range(realizations):
        try:
            sr = optimizer._result_from_row(reals[r], scenario, res, r, with_irs=with_irs)
        except ValueError as exc:
            raise type(exc)(f"substream {r}: {exc}") from exc
        rates[r] = sr.rate
        pas[r] = sr.p_a
    w = scenario.tx_prob
    mean_rate = w * float(np.mean(rates))
    if realizations > 1:
        std_err = w * float(np.std(rates, ddof=1)) / float(np.sqrt(realizations))
    else:
        std_err = 0.0
    return PointStats(
        mean_rate=mean_rate,
        std_err=std_err,
        feasibility_rate=float(np.mean(res["feas_pmax"])),
        mean_pa=float(np.mean(pas)),
        seed=int(seed),
        realizations=int(realizations),
    )


def run_sweep(spec: ExperimentSpec, table_cache: dict | None = None) -> ExperimentResult:
    """Run every sweep point from the common base seed.

    Every point reuses the same realization substreams (common random
    numbers), so curves over the sweep are paired comparisons and
    reordering the value list cannot change any per-point result.

    ``table_cache`` may be shared across calls to reuse detector tables
    between related sweeps; it never changes results.
    """
    if table_cache is None:
        table_cache = {}
    points = []
    for v in spec.sweep_values:
        sc = apply_sweep_value(spec.scenario, spec.sweep_parameter, v)
        stats = run_point(sc, spec.realizations, spec.seed, spec.with_irs, spec.solver, table_cache)
        points.append(replace(stats, sweep_value=float(v)))
    return ExperimentResult(spec=spec, points=tuple(points), solver_hash=solver_options_hash(spec.solver))
