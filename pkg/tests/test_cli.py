"""Command-line contract: configs, exit codes, output formats, determinism."""

import copy
import json

import pytest

import covert_irs.cli as cli
import covert_irs.specfun as specfun
from covert_irs.cli import (
    CURVE_COLUMNS,
    RUN_COLUMNS,
    ConfigError,
    dbm_to_watts,
    expand_template,
    load_config,
    main,
    parse_config,
    points_from_csv,
    points_to_csv,
    result_from_dict,
    result_to_dict,
)
from covert_irs.montecarlo import run_sweep
from covert_irs.validate import SuiteResult

BASE_DOC = {
    "scenario": {
        "pos_alice": [0.0, 0.0],
        "pos_bob": [10.0, 0.0],
        "pos_irs": [5.0, 0.0],
        "pos_willie": [0.0, 15.0],
        "n_units": 2,
        "alpha": 3.0,
        "sigma2_b_dbm": -60.0,
        "sigma2_n_dbm": -60.0,
        "rho": 2.0,
        "xi": 0.99,
        "p_max_dbm": 0.0,
    },
    "sweep": {
        "parameter": "p_max",
        "values_dbm": [-10.0, 0.0],
        "realizations": 2,
        "seed": 7,
    },
    "solver": {"restarts": 1, "bcd_sweeps": 8, "phase_grid": 8, "power_grid": 97},
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def edited(**edits):
    doc = copy.deepcopy(BASE_DOC)
    for dotted, value in edits.items():
        block, key = dotted.split("__")
        if value is None:
            doc[block].pop(key, None)
        else:
            doc[block][key] = value
    return doc


def test_dbm_to_watts_boundary_conversion():
    assert dbm_to_watts(30.0) == 1.0
    assert dbm_to_watts(-60.0) == pytest.approx(1e-9, rel=1e-15)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watts(-20.0) < dbm_to_watts(-19.0)


def test_run_writes_csv_to_stdout_and_summary_to_stderr(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE_DOC)
    assert main(["run", "--config", cfg]) == 0
    out, err = capsys.readouterr()
    lines = out.split("\n")
    assert lines[0] == ",".join(RUN_COLUMNS)
    assert len(lines) == 4 and lines[3] == ""
    assert "\r" not in out
    for line in lines[1:3]:
        fields = line.split(",")
        assert len(fields) == len(RUN_COLUMNS)
        assert fields[5] == "7" and fields[6] == "2"
        assert float(fields[1]) >= 0.0
    assert err.count("rate") == 2


def test_run_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, BASE_DOC)
    f1, f2, f3 = (str(tmp_path / n) for n in ("a.csv", "b.csv", "c.csv"))
    assert main(["run", "--config", cfg, "--out", f1]) == 0
    assert main(["run", "--config", cfg, "--out", f2]) == 0
    assert main(["run", "--config", cfg, "--out", f3, "--seed", "8"]) == 0
    b1 = open(f1, "rb").read()
    assert b1 == open(f2, "rb").read()
    assert b1 != open(f3, "rb").read()


def test_run_csv_round_trips_against_in_process_sweep(tmp_path):
    cfg = write_config(tmp_path, BASE_DOC)
    out = str(tmp_path / "run.csv")
    assert main(["run", "--config", cfg, "--out", out]) == 0
    text = open(out, encoding="utf-8").read()
    expected = run_sweep(load_config(cfg).spec).points
    assert points_from_csv(text) == expected
    assert points_to_csv(expected) == text


def test_run_json_round_trips_field_for_field(tmp_path):
    cfg = write_config(tmp_path, BASE_DOC)
    out = str(tmp_path / "run.json")
    assert main(["run", "--config", cfg, "--out", out, "--format", "json"]) == 0
    doc = json.load(open(out, encoding="utf-8"))
    expected = run_sweep(load_config(cfg).spec)
    assert result_from_dict(doc) == expected
    assert result_to_dict(expected) == doc


def test_run_overrides_seed_realizations_and_surface(tmp_path):
    cfg = write_config(tmp_path, BASE_DOC)
    out = str(tmp_path / "o.csv")
    rc = main(["run", "--config", cfg, "--out", out,
               "--seed", "123", "--realizations", "3", "--no-irs"])
    assert rc == 0
    from dataclasses import replace
    spec = replace(load_config(cfg).spec, seed=123, realizations=3, with_irs=False)
    assert open(out, encoding="utf-8").read() == points_to_csv(run_sweep(spec).points)


def test_config_errors_name_the_key(tmp_path, capsys):
    cases = [
        (edited(scenario__bogus=1.0), "scenario.bogus"),
        (edited(solver__bogus=1), "solver.bogus"),
        (edited(sweep__values=[1e-4, 1e-3]), "values_dbm"),  # both spellings at once
        (edited(sweep__values_dbm=None), "values"),
        (edited(scenario__alpha=None), "scenario.alpha"),
        (edited(sweep__realizations=0), "realizations"),
        (edited(sweep__seed=-1), "seed"),
        (edited(sweep__parameter="d"), "values_dbm"),  # dBm spelling is power-only
        (edited(sweep__values_dbm=[0.0, 0.0]), "monotone"),
        (edited(scenario__n_units=-3), "n_units"),
        (edited(sweep__realizations=2.5), "realizations"),
        (edited(scenario__xi=1.5), "xi"),
        (edited(sweep__values_dbm=[]), "sweep_values"),
    ]
    for doc, needle in cases:
        cfg = write_config(tmp_path, doc)
        assert main(["run", "--config", cfg]) == 2
        err = capsys.readouterr().err
        assert err.startswith("config error:") and needle in err


def test_config_file_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    assert "cannot read config" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["run", "--config", str(broken)]) == 2
    assert "not valid JSON" in capsys.readouterr().err
    listdoc = tmp_path / "list.json"
    listdoc.write_text("[1, 2]", encoding="utf-8")
    assert main(["run", "--config", str(listdoc)]) == 2
    assert "top level" in capsys.readouterr().err


def test_degenerate_model_exits_three(tmp_path, capsys):
    cfg = write_config(tmp_path, edited(scenario__rho=1.0))
    assert main(["run", "--config", cfg]) == 3
    assert "model error" in capsys.readouterr().err


def test_expand_template_families(tmp_path):
    parsed = parse_config(BASE_DOC)
    single = expand_template(parsed.spec, None)
    assert [label for label, _ in single] == ["irs"]
    assert single[0][1] == parsed.spec

    fig4 = expand_template(parsed.spec, "fig4")
    assert [label for label, _ in fig4] == ["irs_rho2", "noirs_rho2", "irs_rho5", "noirs_rho5"]
    for (label, spec), rho, with_irs in zip(
        fig4, (2.0, 2.0, 5.0, 5.0), (True, False, True, False)
    ):
        assert spec.scenario.noise.rho == rho and spec.with_irs == with_irs
        assert spec.sweep_values == parsed.spec.sweep_values

    fig5 = expand_template(parsed.spec, "fig5")
    assert [label for label, _ in fig5] == ["n16", "n64"]
    assert [spec.scenario.n_units for _, spec in fig5] == [16, 64]
    assert all(spec.with_irs for _, spec in fig5)

    from dataclasses import replace
    noirs = replace(parsed.spec, with_irs=False)
    assert expand_template(noirs, None)[0][0] == "noirs"
    with pytest.raises(ConfigError):
        expand_template(replace(parsed.spec, sweep_parameter="rho",
                                sweep_values=(2.0, 5.0)), "fig4")
    with pytest.raises(ConfigError):
        expand_template(replace(parsed.spec, sweep_parameter="n_units",
                                sweep_values=(8.0, 16.0)), "fig5")


def test_curves_single_series_matches_run(tmp_path):
    cfg = write_config(tmp_path, BASE_DOC)
    run_out = str(tmp_path / "run.csv")
    curve_out = str(tmp_path / "curve.csv")
    assert main(["run", "--config", cfg, "--out", run_out]) == 0
    assert main(["curves", "--config", cfg, "--out", curve_out]) == 0
    run_rows = open(run_out, encoding="utf-8").read().strip().split("\n")[1:]
    curve_rows = open(curve_out, encoding="utf-8").read().strip().split("\n")
    assert curve_rows[0] == ",".join(CURVE_COLUMNS)
    assert len(curve_rows) == 1 + len(run_rows)
    for run_row, curve_row in zip(run_rows, curve_rows[1:]):
        rf, cf = run_row.split(","), curve_row.split(",")
        assert cf[0] == "irs"
        assert cf[1:4] == rf[0:3]


def test_curves_template_expansion_end_to_end(tmp_path, capsys):
    doc = edited(sweep__parameter="d", sweep__values_dbm=None)
    doc["sweep"]["values"] = [8.0, 10.0]
    doc["sweep"]["template"] = "fig5"
    doc["sweep"]["realizations"] = 1
    cfg = write_config(tmp_path, doc)
    assert main(["curves", "--config", cfg]) == 0
    out, _ = capsys.readouterr()
    rows = [line.split(",") for line in out.strip().split("\n")[1:]]
    assert [r[0] for r in rows] == ["n16", "n16", "n64", "n64"]
    assert [float(r[1]) for r in rows] == [8.0, 10.0, 8.0, 10.0]
    # more reflecting elements never hurt on paired draws
    for i in (0, 1):
        assert float(rows[2 + i][2]) >= float(rows[i][2])


def test_curves_template_conflict_exits_two(tmp_path, capsys):
    doc = edited(sweep__parameter="rho", sweep__values_dbm=None)
    doc["sweep"]["values"] = [2.0, 5.0]
    doc["sweep"]["template"] = "fig4"
    cfg = write_config(tmp_path, doc)
    assert main(["curves", "--config", cfg]) == 2
    assert "fig4" in capsys.readouterr().err


def test_summary_moves_to_stdout_when_writing_files(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE_DOC)
    out = str(tmp_path / "f.csv")
    assert main(["run", "--config", cfg, "--out", out]) == 0
    captured = capsys.readouterr()
    assert "rate" in captured.out and captured.err == ""
    assert open(out, encoding="utf-8").read().startswith(",".join(RUN_COLUMNS))


def test_validate_exit_codes_per_suite_outcome(monkeypatch, capsys):
    good = SuiteResult("stub-suite", True, 1e-15, 1e-9, "stub")
    bad = SuiteResult("stub-suite", False, 1.0, 1e-9, "stub")
    monkeypatch.setattr(cli, "run_validation", lambda level: [good])
    assert main(["validate", "fast"]) == 0
    assert "PASS" in capsys.readouterr().out
    monkeypatch.setattr(cli, "run_validation", lambda level: [good, bad])
    assert main(["validate", "full"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_validate_catches_injected_series_regression(monkeypatch, capsys):
    # a 1e-6 relative error in the exponential integral is far above the
    # quadrature suite's bound and must turn the run red
    real = specfun.expint_ei
    monkeypatch.setattr(specfun, "expint_ei", lambda x: real(x) * (1.0 + 1e-6))
    assert main(["validate", "fast"]) == 1
    out = capsys.readouterr().out
    assert "ei-quadrature" in out and "FAIL" in out
