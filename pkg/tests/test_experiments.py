"""Tests for the experiment runner and the command line front end."""

import csv
import json
import math

import numpy as np
import pytest

from sinebeta import cli, validation
from sinebeta.experiments import (
    CHUNK_SIZE,
    ConfigError,
    ExperimentConfig,
    _n_chunks,
    phase_matched_grid,
    run,
)


def _cfg(kind="intensity", beta=2.0, n_samples=60, base_seed=3, **options):
    return ExperimentConfig(kind=kind, beta=beta, n_samples=n_samples,
                            base_seed=base_seed, options=options)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown kind"):
        _cfg(kind="frobnicate")
    with pytest.raises(ConfigError, match="beta"):
        _cfg(beta=0.0)
    with pytest.raises(ConfigError, match="n_samples"):
        _cfg(n_samples=0)
    with pytest.raises(ConfigError, match="base_seed"):
        _cfg(base_seed=-1)
    with pytest.raises(ConfigError, match="unknown options"):
        _cfg(kind="intensity", turbo=True)


def test_config_json_roundtrip_and_errors():
    cfg = _cfg(kind="two_point_decay", r_grid=[10.0, 20.0])
    back = ExperimentConfig.from_json(json.dumps(cfg.to_dict()))
    assert back == cfg
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.from_json("{nope")
    with pytest.raises(ConfigError, match="JSON object"):
        ExperimentConfig.from_json("[1, 2]")
    with pytest.raises(ConfigError, match="malformed"):
        ExperimentConfig.from_dict({"beta": 2.0})


def test_phase_matched_grid():
    beta, r_base = 4.0, 100.0
    grid = phase_matched_grid(beta, r_base)
    assert grid[0] == 0.0
    accumulated = r_base * (1.0 - math.exp(-beta * grid[1] / 4.0))
    assert accumulated == pytest.approx(2.0 * math.pi / 3.0, rel=1e-12)
    with pytest.raises(ConfigError):
        phase_matched_grid(2.0, 1.0)


def test_chunk_plan():
    assert _n_chunks(_cfg(n_samples=1)) == 1
    assert _n_chunks(_cfg(n_samples=CHUNK_SIZE)) == 1
    assert _n_chunks(_cfg(n_samples=CHUNK_SIZE + 1)) == 2
    assert _n_chunks(_cfg(kind="two_point_decay", r_grid=[1.0, 2.0, 4.0])) == 3
    assert _n_chunks(_cfg(kind="oscillation_trace", n_samples=5)) == 5
    assert _n_chunks(_cfg(kind="coupling_tv", r_values=[50.0, 100.0])) == 2


def test_intensity_run_artifacts(tmp_path):
    cfg = _cfg(n_samples=60, lam=2.0 * math.pi)
    res = run(cfg, tmp_path / "out")
    assert res.complete
    header, rows = _read_csv(res.csv_path)
    assert header == ["beta", "lam", "chunk", "n_samples", "mean", "m2"]
    assert len(rows) == 1
    assert int(rows[0][3]) == 60

    manifest = json.loads(res.manifest_path.read_text())
    assert manifest["complete"] is True
    assert manifest["chunks_done"] == manifest["n_chunks"] == 1
    assert manifest["schema_version"] == 1
    assert manifest["config"] == cfg.to_dict()
    assert set(manifest["versions"]) == {"sinebeta", "numpy", "python"}

    summary = json.loads(res.summary_path.read_text())
    assert summary["n_samples"] == 60
    assert summary["std_err"] > 0
    assert abs(summary["normalized_mean"] - 1.0) < 6 * summary["std_err"]


def test_worker_count_does_not_change_results(tmp_path):
    cfg = _cfg(kind="coupling_tv", beta=4.0, n_samples=120,
               r_values=[100.0, 200.0])
    serial = run(cfg, tmp_path / "serial", n_workers=1)
    pooled = run(cfg, tmp_path / "pooled", n_workers=2)
    assert serial.csv_path.read_bytes() == pooled.csv_path.read_bytes()
    assert serial.summary_path.read_bytes() == pooled.summary_path.read_bytes()
    assert "first_step_ratio" in serial.summary


def test_oscillation_trace(tmp_path):
    cfg = _cfg(kind="oscillation_trace", n_samples=2, r=5.0, t_end=2.0,
               n_steps=100, thin=10)
    res = run(cfg, tmp_path / "out")
    header, rows = _read_csv(res.csv_path)
    assert header == ["beta", "r", "path", "t", "alpha", "cos_alpha"]
    assert len(rows) == 22
    by_path = {}
    for row in rows:
        by_path.setdefault(int(row[2]), []).append(
            (float(row[3]), float(row[4]), float(row[5])))
    assert set(by_path) == {0, 1}
    for recs in by_path.values():
        ts = [t for t, _, _ in recs]
        assert ts == sorted(ts)
        assert ts[0] == 0.0 and ts[-1] == 2.0
        for _, alpha, cos_alpha in recs:
            assert cos_alpha == pytest.approx(math.cos(alpha), abs=1e-12)
    # distinct seeds produce distinct paths
    assert by_path[0][-1][1] != by_path[1][-1][1]


def test_euler_convergence_run(tmp_path):
    cfg = _cfg(kind="euler_convergence", n_samples=800, lam=1.0,
               n_base=32, n_levels=5)
    res = run(cfg, tmp_path / "out")
    _, rows = _read_csv(res.csv_path)
    assert len(rows) == 4
    assert res.summary["below_bound"] is True
    assert 0.25 < res.summary["slope"] < 0.75


def test_k_point_run_and_missing_intervals(tmp_path):
    cfg = _cfg(kind="k_point", n_samples=2000,
               intervals=[[-1.0, 1.0], [0.0, 1.0]])
    res = run(cfg, tmp_path / "out")
    est = res.summary["estimate"]
    assert est["std_err"] > 0
    assert est["n_samples"] > 0

    bad = _cfg(kind="k_point", n_samples=10)
    with pytest.raises(ConfigError, match="intervals"):
        run(bad, tmp_path / "bad")
    manifest = json.loads((tmp_path / "bad" / "manifest.json").read_text())
    assert manifest["complete"] is False


def test_two_point_decay_run(tmp_path):
    r_grid = [4.0 * math.pi, 8.0 * math.pi]
    cfg = _cfg(kind="two_point_decay", n_samples=800, r_grid=r_grid)
    res = run(cfg, tmp_path / "out")
    header, rows = _read_csv(res.csv_path)
    assert [float(r[1]) for r in rows] == r_grid
    ests = res.summary["estimates"]
    assert len(ests) == 2
    assert all(e["std_err"] > 0 for e in ests)
    # 800 samples cannot pin the slope; either outcome must be reported
    assert ("fit" in res.summary) != ("fit_error" in res.summary)


def test_cli_requires_config_or_validate(capsys):
    assert cli.main([]) == 2
    assert "either --config or --validate" in capsys.readouterr().err


def test_cli_bad_config_file(tmp_path, capsys):
    bad = tmp_path / "cfg.json"
    bad.write_text("{not json")
    assert cli.main(["--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 2
    assert "i/o error" in capsys.readouterr().err


def test_cli_runs_experiment(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "kind": "oscillation_trace", "beta": 2.0, "n_samples": 1,
        "base_seed": 5,
        "options": {"r": 3.0, "t_end": 1.0, "n_steps": 50, "thin": 10}}))
    out_dir = tmp_path / "out"
    assert cli.main(["--config", str(cfg_path), "--out", str(out_dir),
                     "--seed", "11"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["kind"] == "oscillation_trace"
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["config"]["base_seed"] == 11


def test_cli_bad_criteria_value(capsys):
    assert cli.main(["--validate", "--criteria", "1,x"]) == 2
    assert "bad --criteria" in capsys.readouterr().err


def test_cli_validate_exit_codes(monkeypatch, capsys):
    def fake_run_all(only=None):
        return [validation.CriterionResult(
            index=3, name="decay_window", passed=False,
            detail="slope off", wall_time_s=1.0)]

    monkeypatch.setattr(validation, "run_all", fake_run_all)
    assert cli.main(["--validate"]) == 1
    out = capsys.readouterr().out
    assert "criterion 03" in out
    assert "FAIL" in out
    assert "0/1 criteria passed" in out

    monkeypatch.setattr(
        validation, "run_all",
        lambda only=None: [validation.CriterionResult(
            index=1, name="intensity", passed=True, detail="ok")])
    assert cli.main(["--validate"]) == 0
    assert "1/1 criteria passed" in capsys.readouterr().out


def test_worker_env_fallback(monkeypatch, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "kind": "oscillation_trace", "beta": 2.0, "n_samples": 1,
        "base_seed": 5,
        "options": {"r": 3.0, "t_end": 1.0, "n_steps": 50, "thin": 25}}))
    monkeypatch.setenv("SINEBETA_WORKERS", "not a number")
    assert cli.main(["--config", str(cfg_path),
                     "--out", str(tmp_path / "out")]) == 0
    capsys.readouterr()


def test_overcrowding_run(tmp_path):
    cfg = _cfg(kind="overcrowding", n_samples=3000, lam=1.0)
    res = run(cfg, tmp_path / "out")
    header, rows = _read_csv(res.csv_path)
    assert header == ["beta", "lam", "chunk", "n_samples", "ge3", "ge4",
                      "ge5"]
    levels = res.summary["levels"]
    assert set(levels) == {"3", "4", "5"}
    for stats in levels.values():
        if stats["applicable"]:
            assert (stats["empirical"] - 3 * stats["std_err"]
                    <= stats["bound"])
    # deeper overcrowding can only be rarer
    assert (levels["3"]["empirical"] >= levels["4"]["empirical"]
            >= levels["5"]["empirical"])


def test_corrupted_oracle_fails_validation(monkeypatch, capsys):
    # a corrupted reference value must make its criterion fail loudly
    from sinebeta import coupling, validation

    monkeypatch.setattr(coupling, "hellinger_complex_gaussian",
                        lambda x, y: 0.0)
    res = validation.criterion_hellinger()
    assert not res.passed
    assert cli.main(["--validate", "--criteria", "5"]) == 1
    assert "FAIL" in capsys.readouterr().out
