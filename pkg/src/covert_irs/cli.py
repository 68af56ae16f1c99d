"""Command-line front end: config ingestion, experiments, validation.

Three subcommands:

``covert-irs run --config cfg.json``
    One sweep, one series.  CSV columns: sweep_value, mean_rate, std_err,
    feasibility_rate, mean_pa_watts, seed, realizations.

``covert-irs curves --config cfg.json``
    Plot-ready long-format CSV (series, sweep_value, mean_rate, std_err).
    A config may name a built-in template ("fig4": with/without surface
    crossed with rho in {2, 5}; "fig5": 16 vs 64 elements) to expand one
    sweep into the matching series family; ``run`` executes the same
    config as its single base series.

``covert-irs validate fast|full``
    Runs the numeric invariant suites and reports per-suite worst errors.

Configs are strict JSON: unknown keys are rejected by full path, powers
cross the boundary in dBm (watts = 10^((dBm - 30) / 10)) and are stored
as watts everywhere inside.  Exit codes: 0 success, 1 validation-suite
failure, 2 bad config, 3 model error during execution (e.g. rho = 1).
CSV output is RFC 4180 with LF line endings and round-trip float
formatting, so rerunning a config with the same seed is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, replace

from .channel import Scenario
from .detector import DegenerateModelError
from .montecarlo import ExperimentResult, ExperimentSpec, PointStats, run_sweep
from .optimizer import SolveOptions
from .specfun import NoiseUncertaintyModel
from .validate import LEVELS, run_validation

RUN_COLUMNS = ("sweep_value", "mean_rate", "std_err", "feasibility_rate",
               "mean_pa_watts", "seed", "realizations")
CURVE_COLUMNS = ("series", "sweep_value", "mean_rate", "std_err")
TEMPLATES = ("fig4", "fig5")
FORMATS = ("csv", "json")

_MISSING = object()


class ConfigError(ValueError):
    """Config rejected before any experiment ran; message names the key."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _reject_unknown(block: dict, known, path: str) -> None:
    for key in block:
        if key not in known:
            raise ConfigError(f"unknown key {path}{key}")


def _block(doc: dict, key: str, path: str, required: bool) -> dict:
    val = doc.get(key, _MISSING)
    if val is _MISSING:
        if required:
            raise ConfigError(f"missing block {path}{key}")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"{path}{key} must be an object, got {type(val).__name__}")
    return val


def _num(block: dict, key: str, path: str, default=_MISSING) -> float:
    val = block.get(key, _MISSING)
    if val is _MISSING:
        if default is _MISSING:
            raise ConfigError(f"missing key {path}{key}")
        return default
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}{key} must be a number, got {val!r}")
    return float(val)


def _int(block: dict, key: str, path: str, default=_MISSING) -> int:
    val = block.get(key, _MISSING)
    if val is _MISSING:
        if default is _MISSING:
            raise ConfigError(f"missing key {path}{key}")
        return default
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}{key} must be an integer, got {val!r}")
    return val


def _bool(block: dict, key: str, path: str, default: bool) -> bool:
    val = block.get(key, default)
    if not isinstance(val, bool):
        raise ConfigError(f"{path}{key} must be true or false, got {val!r}")
    return val


def _str(block: dict, key: str, path: str, choices=None, default=_MISSING) -> str:
    val = block.get(key, _MISSING)
    if val is _MISSING:
        if default is _MISSING:
            raise ConfigError(f"missing key {path}{key}")
        return default
    if not isinstance(val, str):
        raise ConfigError(f"{path}{key} must be a string, got {val!r}")
    if choices is not None and val not in choices:
        raise ConfigError(f"{path}{key} must be one of {choices}, got {val!r}")
    return val


def _position(block: dict, key: str, path: str) -> tuple:
    val = block.get(key, _MISSING)
    if val is _MISSING:
        raise ConfigError(f"missing key {path}{key}")
    ok = isinstance(val, list) and len(val) == 2 and all(
        isinstance(c, (int, float)) and not isinstance(c, bool) for c in val
    )
    if not ok:
        raise ConfigError(f"{path}{key} must be a pair of numbers, got {val!r}")
    return (float(val[0]), float(val[1]))


def _num_list(block: dict, key: str, path: str) -> list:
    val = block[key]
    ok = isinstance(val, list) and all(
        isinstance(c, (int, float)) and not isinstance(c, bool) for c in val
    )
    if not ok:
        raise ConfigError(f"{path}{key} must be a list of numbers, got {val!r}")
    return [float(c) for c in val]


@dataclass(frozen=True)
class ParsedConfig:
    """Validated config: the base experiment plus output routing."""

    spec: ExperimentSpec
    template: str | None
    out_path: str | None
    out_format: str


def _parse_scenario(doc: dict) -> Scenario:
    path = "scenario."
    block = _block(doc, "scenario", "", required=True)
    known = ("pos_alice", "pos_bob", "pos_irs", "pos_willie", "n_units", "alpha",
             "sigma2_b_dbm", "sigma2_n_dbm", "rho", "xi", "p_max_dbm", "tx_prob")
    _reject_unknown(block, known, path)
    noise = NoiseUncertaintyModel(
        sigma2_n=dbm_to_watts(_num(block, "sigma2_n_dbm", path)),
        rho=_num(block, "rho", path),
    )
    return Scenario(
        pos_alice=_position(block, "pos_alice", path),
        pos_bob=_position(block, "pos_bob", path),
        pos_irs=_position(block, "pos_irs", path),
        pos_willie=_position(block, "pos_willie", path),
        n_units=_int(block, "n_units", path),
        alpha=_num(block, "alpha", path),
        sigma2_b=dbm_to_watts(_num(block, "sigma2_b_dbm", path)),
        noise=noise,
        xi=_num(block, "xi", path),
        p_max=dbm_to_watts(_num(block, "p_max_dbm", path)),
        tx_prob=_num(block, "tx_prob", path, default=0.5),
    )


def _parse_solver(doc: dict) -> SolveOptions:
    path = "solver."
    block = _block(doc, "solver", "", required=False)
    defaults = SolveOptions()
    _reject_unknown(
        block,
        ("restarts", "bcd_sweeps", "phase_grid", "power_grid", "tolerance", "rng_seed"),
        path,
    )
    return SolveOptions(
        restarts=_int(block, "restarts", path, defaults.restarts),
        bcd_sweeps=_int(block, "bcd_sweeps", path, defaults.bcd_sweeps),
        phase_grid=_int(block, "phase_grid", path, defaults.phase_grid),
        power_grid=_int(block, "power_grid", path, defaults.power_grid),
        tolerance=_num(block, "tolerance", path, defaults.tolerance),
        rng_seed=_int(block, "rng_seed", path, defaults.rng_seed),
    )


def parse_config(doc) -> ParsedConfig:
    """Validate a loaded JSON document and build the base experiment.

    Raises ConfigError naming the offending key for any schema or
    invariant violation (object construction errors included).
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"top level must be an object, got {type(doc).__name__}")
    _reject_unknown(doc, ("scenario", "sweep", "solver", "output"), "")

    path = "sweep."
    sweep = _block(doc, "sweep", "", required=True)
    _reject_unknown(
        sweep,
        ("parameter", "values", "values_dbm", "realizations", "seed", "with_irs", "template"),
        path,
    )
    parameter = _str(sweep, "parameter", path, choices=("p_max", "d", "n_units", "rho"))
    has_raw = "values" in sweep
    has_dbm = "values_dbm" in sweep
    if has_raw == has_dbm:
        raise ConfigError(f"exactly one of {path}values and {path}values_dbm is required")
    if has_dbm:
        if parameter != "p_max":
            raise ConfigError(f"{path}values_dbm only applies to the p_max parameter")
        values = [dbm_to_watts(v) for v in _num_list(sweep, "values_dbm", path)]
    else:
        values = _num_list(sweep, "values", path)
    template = _str(sweep, "template", path, choices=TEMPLATES, default=None)

    out_path_s = "output."
    out = _block(doc, "output", "", required=False)
    _reject_unknown(out, ("path", "format"), out_path_s)
    out_file = _str(out, "path", out_path_s, default=None)
    out_format = _str(out, "format", out_path_s, choices=FORMATS, default="csv")

    try:
        spec = ExperimentSpec(
            scenario=_parse_scenario(doc),
            sweep_parameter=parameter,
            sweep_values=tuple(values),
            realizations=_int(sweep, "realizations", path),
            seed=_int(sweep, "seed", path),
            with_irs=_bool(sweep, "with_irs", path, default=True),
            solver=_parse_solver(doc),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ParsedConfig(spec=spec, template=template, out_path=out_file, out_format=out_format)


def load_config(path: str) -> ParsedConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _apply_overrides(parsed: ParsedConfig, args) -> ParsedConfig:
    spec = parsed.spec
    try:
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        if args.realizations is not None:
            spec = replace(spec, realizations=args.realizations)
        if getattr(args, "no_irs", False):
            spec = replace(spec, with_irs=False)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ParsedConfig(
        spec=spec,
        template=parsed.template,
        out_path=args.out if args.out is not None else parsed.out_path,
        out_format=args.format if args.format is not None else parsed.out_format,
    )


# ---------------------------------------------------------------------------
# serialization

def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "pos_alice": list(sc.pos_alice),
        "pos_bob": list(sc.pos_bob),
        "pos_irs": list(sc.pos_irs),
        "pos_willie": list(sc.pos_willie),
        "n_units": sc.n_units,
        "alpha": sc.alpha,
        "sigma2_b": sc.sigma2_b,
        "noise": {"sigma2_n": sc.noise.sigma2_n, "rho": sc.noise.rho},
        "xi": sc.xi,
        "p_max": sc.p_max,
        "tx_prob": sc.tx_prob,
    }


def scenario_from_dict(d: dict) -> Scenario:
    return Scenario(
        pos_alice=tuple(d["pos_alice"]),
        pos_bob=tuple(d["pos_bob"]),
        pos_irs=tuple(d["pos_irs"]),
        pos_willie=tuple(d["pos_willie"]),
        n_units=d["n_units"],
        alpha=d["alpha"],
        sigma2_b=d["sigma2_b"],
        noise=NoiseUncertaintyModel(**d["noise"]),
        xi=d["xi"],
        p_max=d["p_max"],
        tx_prob=d["tx_prob"],
    )


def result_to_dict(result: ExperimentResult) -> dict:
    spec = result.spec
    return {
        "spec": {
            "scenario": scenario_to_dict(spec.scenario),
            "sweep_parameter": spec.sweep_parameter,
            "sweep_values": list(spec.sweep_values),
            "realizations": spec.realizations,
            "seed": spec.seed,
            "with_irs": spec.with_irs,
            "solver": asdict(spec.solver),
        },
        "points": [
            {
                "sweep_value": p.sweep_value,
                "mean_rate": p.mean_rate,
                "std_err": p.std_err,
                "feasibility_rate": p.feasibility_rate,
                "mean_pa": p.mean_pa,
                "seed": p.seed,
                "realizations": p.realizations,
            }
            for p in result.points
        ],
        "solver_hash": result.solver_hash,
    }


def result_from_dict(d: dict) -> ExperimentResult:
    s = d["spec"]
    spec = ExperimentSpec(
        scenario=scenario_from_dict(s["scenario"]),
        sweep_parameter=s["sweep_parameter"],
        sweep_values=tuple(s["sweep_values"]),
        realizations=s["realizations"],
        seed=s["seed"],
        with_irs=s["with_irs"],
        solver=SolveOptions(**s["solver"]),
    )
    points = tuple(PointStats(**p) for p in d["points"])
    return ExperimentResult(spec=spec, points=points, solver_hash=d["solver_hash"])


def points_to_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_COLUMNS)
    for p in points:
        writer.writerow([repr(float(p.sweep_value)), repr(p.mean_rate), repr(p.std_err),
                         repr(p.feasibility_rate), repr(p.mean_pa), p.seed, p.realizations])
    return buf.getvalue()


def points_from_csv(text: str) -> tuple:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != RUN_COLUMNS:
        raise ValueError(f"expected header {','.join(RUN_COLUMNS)}")
    return tuple(
        PointStats(
            sweep_value=float(r[0]),
            mean_rate=float(r[1]),
            std_err=float(r[2]),
            feasibility_rate=float(r[3]),
            mean_pa=float(r[4]),
            seed=int(r[5]),
            realizations=int(r[6]),
        )
        for r in rows[1:]
    )


def curves_to_csv(series) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for label, result in series:
        for p in result.points:
            writer.writerow([label, repr(float(p.sweep_value)), repr(p.mean_rate), repr(p.std_err)])
    return buf.getvalue()


def curves_to_dict(series) -> dict:
    return {"series": [{"label": label, "result": result_to_dict(result)}
                       for label, result in series]}


# ---------------------------------------------------------------------------
# commands

def expand_template(spec: ExperimentSpec, template: str | None):
    """Series list (label, spec) for one curves invocation."""
    if template is None:
        return [("irs" if spec.with_irs else "noirs", spec)]
    if template == "fig4":
        if spec.sweep_parameter == "rho":
            raise ConfigError("sweep.template fig4 varies rho itself; sweep another parameter")
        out = []
        for rho in (2.0, 5.0):
            noise = NoiseUncertaintyModel(spec.scenario.noise.sigma2_n, rho)
            sc = replace(spec.scenario, noise=noise)
            for with_irs, tag in ((True, "irs"), (False, "noirs")):
                out.append((f"{tag}_rho{rho:g}",
                            replace(spec, scenario=sc, with_irs=with_irs)))
        return out
    if spec.sweep_parameter == "n_units":
        raise ConfigError("sweep.template fig5 varies n_units itself; sweep another parameter")
    return [
        (f"n{n}", replace(spec, scenario=replace(spec.scenario, n_units=n), with_irs=True))
        for n in (16, 64)
    ]


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _summary_stream(out_path: str | None):
    # keep human summaries off the data stream when CSV goes to stdout
    return sys.stdout if out_path is not None else sys.stderr


def cmd_run(parsed: ParsedConfig) -> int:
    result = run_sweep(parsed.spec)
    log = _summary_stream(parsed.out_path)
    for p in result.points:
        print(
            f"{parsed.spec.sweep_parameter}={p.sweep_value:.6g}: "
            f"rate {p.mean_rate:.6g} +/- {p.std_err:.3g}, "
            f"feasible {p.feasibility_rate:.4g}, mean P_A {p.mean_pa:.6g} W",
            file=log,
        )
    if parsed.out_format == "csv":
        _emit(points_to_csv(result.points), parsed.out_path)
    else:
        _emit(json.dumps(result_to_dict(result), indent=2) + "\n", parsed.out_path)
    return 0


def cmd_curves(parsed: ParsedConfig) -> int:
    series = []
    cache = {}
    log = _summary_stream(parsed.out_path)
    for label, spec in expand_template(parsed.spec, parsed.template):
        result = run_sweep(spec, table_cache=cache)
        series.append((label, result))
        rates = ", ".join(f"{p.mean_rate:.4g}" for p in result.points)
        print(f"series {label}: {rates}", file=log)
    if parsed.out_format == "csv":
        _emit(curves_to_csv(series), parsed.out_path)
    else:
        _emit(json.dumps(curves_to_dict(series), indent=2) + "\n", parsed.out_path)
    return 0


def cmd_validate(level: str) -> int:
    failures = 0
    for suite in run_validation(level):
        status = "PASS" if suite.passed else "FAIL"
        print(f"{suite.name:<18} {status}  worst {suite.worst:.3g}  "
              f"(bound {suite.bound:g})  {suite.detail}")
        failures += 0 if suite.passed else 1
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covert-irs",
        description="Covert-link experiments with an intelligent reflecting surface.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run one sweep and write per-point statistics"),
        ("curves", "run a series family and write long-format plot data"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override sweep.seed")
        p.add_argument("--realizations", type=int, default=None,
                       help="override sweep.realizations")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=FORMATS, default=None,
                       help="output format (default from config, else csv)")
        if name == "run":
            p.add_argument("--no-irs", action="store_true", dest="no_irs",
                           help="disable the surface (direct paths only)")

    v = sub.add_parser("validate", help="run the numeric invariant suites")
    v.add_argument("level", choices=LEVELS, help="suite depth")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.level)
    try:
        parsed = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            return cmd_run(parsed)
        return cmd_curves(parsed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateModelError, ValueError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
