import json
from pathlib import Path

import pytest

from levydecon.errors import ConfigError, EmptySpectrum
from levydecon.estimate import a_n_rule
from levydecon.studyctl import (
    THREADS_ENV,
    StudyConfig,
    emit_plotdata,
    load_config,
    main,
    run_calibration,
    run_study,
    write_study,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = {
    "name": "small",
    "model": {"kernel": {"type": "exp_trunc1d", "theta": 4.0}},
    "grid": {"dimension": 1, "delta": 1.0, "shape": [100], "origin": [-50]},
    "estimator": {"l": [2], "a_n": 0.5, "y_per_l": 64},
    "replications": 3,
    "base_seed": 99,
    "threads": 1,
}


def small(**over):
    d = json.loads(json.dumps(SMALL))
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k].update(v)
        else:
            d[k] = v
    return d


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# --- configuration --------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.replications >= 1
    assert StudyConfig.from_dict(cfg.to_dict()) == cfg


def test_defaults():
    cfg = StudyConfig()
    assert cfg.estimator.l == (1, 2, 3) and cfg.grid.n == 100


@pytest.mark.parametrize(
    "data",
    [
        small(bogus=1),
        small(model={"kernel": {"type": "exp_trunc1d"}, "color": "red"}),
        small(estimator={"l": [2], "a_n": "sometimes"}),
        small(estimator={"l": [0]}),
        small(grid={"dimension": 2, "delta": 1.0, "shape": [5, 5], "origin": [0, 0]}),
        small(model={"kernel": {"type": "no_such_kernel"}}),
        small(model={"kernel": {"type": "exp_trunc1d"}, "v0": "cauchy"}),
        small(replications=0),
        small(threads=0),
        small(base_seed=-1),
        [],
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        StudyConfig.from_dict(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_config_hash_ignores_execution_fields():
    a = StudyConfig.from_dict(small())
    b = StudyConfig.from_dict(small(threads=4, output_dir="elsewhere"))
    c = StudyConfig.from_dict(small(base_seed=100))
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_full_scale_section():
    cfg = load_config(CONFIGS / "table2_desk.json")
    full = cfg.at_full_scale()
    assert full.grid.shape == (100, 100) and full.grid.origin == (-50, -50)
    assert full.estimator.l == (1, 2, 3) and full.replications == 100
    assert full.estimator.a_n == cfg.estimator.a_n and full.full is None
    assert cfg.grid.shape == (50, 50)


def test_thread_resolution(monkeypatch):
    cfg = StudyConfig.from_dict(small(threads="auto"))
    monkeypatch.setenv(THREADS_ENV, "3")
    assert cfg.resolve_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        cfg.resolve_threads()
    monkeypatch.delenv(THREADS_ENV)
    assert cfg.resolve_threads() >= 1
    assert StudyConfig.from_dict(small(threads=2)).resolve_threads() == 2


# --- studies --------------------------------------------------------------


def _strip_time(reps):
    return [{k: v for k, v in r.items() if k != "time_s"} for r in reps]


def test_study_is_reproducible():
    cfg = StudyConfig.from_dict(small())
    a, b = run_study(cfg), run_study(cfg)
    assert _strip_time(a.replications) == _strip_time(b.replications)
    assert [(r.estimator, r.l, r.mean_mse, r.sd_mse) for r in a.rows] == [
        (r.estimator, r.l, r.mean_mse, r.sd_mse) for r in b.rows
    ]


def test_single_replication_study():
    res = run_study(StudyConfig.from_dict(small(replications=1)))
    assert len(res.replications) == 1 and all(r.sd_mse == 0.0 for r in res.rows)


def test_threads_do_not_change_results():
    cfg = StudyConfig.from_dict(small(replications=4, estimator={"l": [1, 2], "y_per_l": 64}))
    assert _strip_time(run_study(cfg, threads=1).replications) == _strip_time(run_study(cfg, threads=3).replications)


def test_study_rows_and_provenance():
    cfg = StudyConfig.from_dict(small(estimator={"l": [1, 2], "y_per_l": 64}))
    res = run_study(cfg)
    assert [(r.estimator, r.l) for r in res.rows] == [("hat", 1), ("tilde", 1), ("hat", 2), ("tilde", 2)]
    assert len(res.replications) == 3 * 2
    assert res.provenance["config_hash"] == cfg.config_hash()
    assert res.provenance["log_grid"] == [-12.0, 12.0, 4096]
    for r in res.replications:
        assert r["mse_tilde"] <= r["mse_hat"] + 1e-15


def test_auto_rule_a_n():
    cfg = StudyConfig.from_dict(small(replications=1, estimator={"l": [2], "a_n": "auto", "C_k": 0.8, "y_per_l": 64}))
    res = run_study(cfg)
    assert res.replications[0]["a_n"] == a_n_rule(0.8, 100, 0.5)


def test_calibration_run():
    cfg = StudyConfig.from_dict(
        small(replications=1, estimator={"l": [1, 2], "a_n": "calibrate", "calibration_k": 2, "y_per_l": 64})
    )
    cal = run_calibration(cfg)
    assert cal["l"] == 2 and cal["k"] == 2
    assert abs(cal["a_n"] - a_n_rule(cal["C_k"], 100, 0.5)) < 1e-15
    res = run_study(cfg)
    assert res.calibration == cal
    assert res.replications[0]["a_n"] == cal["a_n"]


def test_failed_replication_is_tagged():
    cfg = StudyConfig.from_dict(small(estimator={"l": [2], "a_n": 50.0, "y_per_l": 64}))
    with pytest.raises(EmptySpectrum, match="replication 0"):
        run_study(cfg)


def test_written_study_is_byte_identical(tmp_path):
    cfg = StudyConfig.from_dict(small())
    write_study(run_study(cfg), cfg, tmp_path / "a")
    write_study(run_study(cfg), cfg, tmp_path / "b")

    def drop_time(path):
        lines = path.read_text().splitlines()
        cols = lines[0].split(",")
        keep = [i for i, c in enumerate(cols) if "time" not in c]
        return [",".join(row.split(",")[i] for i in keep) for row in lines]

    for name in ("summary.csv", "replications.csv"):
        assert drop_time(tmp_path / "a" / name) == drop_time(tmp_path / "b" / name)
    meta = json.loads((tmp_path / "a" / "study.json").read_text())
    assert meta["provenance"]["base_seed"] == 99 and meta["config"]["name"] == "small"


def test_emit_plotdata_headers_only(tmp_path):
    out = emit_plotdata(tmp_path / "p")
    assert (out / "trajectory.csv").read_text() == "j,value\n"
    assert (out / "estimate.csv").read_text() == "x,uv1_hat,uv0_hat,uv0_tilde,uv0_true\n"
    assert (out / "summary.csv").read_text().startswith("estimator,l,mean_mse")


# --- command line ---------------------------------------------------------


def test_cli_simulate_estimate_round_trip(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small())
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    field = tmp_path / "sim" / "field.csv"
    assert field.exists() and (tmp_path / "sim" / "trajectory.csv").exists()
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "est"), "--input", str(field)]) == 0
    info = json.loads((tmp_path / "est" / "estimate.json").read_text())
    assert set(info["errors"]) == {"2"}
    assert (tmp_path / "est" / "estimate_l2.csv").exists()


def test_cli_study_and_seed_override(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small(replications=2))
    assert main(["study", "--config", str(cfg), "--out", str(tmp_path / "s"), "--seed", "5", "--threads", "1"]) == 0
    meta = json.loads((tmp_path / "s" / "study.json").read_text())
    assert meta["provenance"]["base_seed"] == 5
    assert "mean_mse" in capsys.readouterr().out


def test_cli_multiplier_report(tmp_path, capsys):
    assert main(["multiplier", "--config", str(CONFIGS / "example_zeros.json"), "--out", str(tmp_path / "m")]) == 0
    rep = json.loads((tmp_path / "m" / "multiplier.json").read_text())
    assert rep["injectivity"]["ae_nonvanishing"] is True
    assert rep["uniform_bound"]["bounded_below"] is False
    assert len(rep["simple_condition"]) == 2


def test_cli_diagnose(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small(model={"kernel": {"type": "exp_trunc1d", "theta": 4.0}, "a0": 0.21379664776456012}))
    assert main(["diagnose", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    info = json.loads((tmp_path / "d" / "diagnose.json").read_text())
    assert info["bounded"] and abs(info["I_at_x_max"] - 4) < 0.05
    assert abs(info["a1"] - 0.36193803537) < 1e-8


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["study", "--config", str(write_cfg(tmp_path, small(extra=1)))]) == 2
    assert main(["study", "--config", str(tmp_path / "nope.json")]) == 2
    bad_cutoff = small(replications=1, estimator={"l": [2], "a_n": 50.0, "y_per_l": 64})
    assert main(["study", "--config", str(write_cfg(tmp_path, bad_cutoff, "b.json")), "--out", str(tmp_path / "x")]) == 3
    err = capsys.readouterr().err
    assert "config error" in err and "numerical error" in err


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
