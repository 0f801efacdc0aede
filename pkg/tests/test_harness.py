import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wipcom import ConfigError, default_geometry
from wipcom import io
from wipcom.cli import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_DIVERGENCE, main
from wipcom.harness import load_experiment, substream_seed
from wipcom.mass_model import DEFAULT_LINK_MASSES

SMALL = """
[experiment]
name = small
seed = 3
n_poses = 300
n_betas = 10
eta = 200
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def run(cfg_path, out, *args):
    return main([args[0], "--config", str(cfg_path), "--out", str(out), *args[1:]])


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(data=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=finite))
def test_csv_round_trip_is_exact(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    io.write_csv(path, [f"c{i}" for i in range(data.shape[1])], data, {"seed": 7})
    cols, back, meta = io.read_csv(path)
    np.testing.assert_array_equal(back, data)
    assert meta == {"seed": "7"} and len(cols) == data.shape[1]


def test_model_ini_round_trip(tmp_path):
    geom = default_geometry()
    path = tmp_path / "m.ini"
    path.write_text(io.dump_model(geom, DEFAULT_LINK_MASSES))
    g2, masses = io.load_model(path)
    np.testing.assert_array_equal(g2.link_lengths, geom.link_lengths)
    np.testing.assert_array_equal(g2.joint_lower, geom.joint_lower)
    np.testing.assert_array_equal(masses, DEFAULT_LINK_MASSES)
    assert g2.wheel_inertia == geom.wheel_inertia


def test_bad_model_sections(tmp_path):
    path = tmp_path / "m.ini"
    path.write_text("[model]\ntotal_mass = 10\n[link1]\nlength = 1\nlower = -1\nupper = 1\n"
                    "[link3]\nlength = 1\nlower = -1\nupper = 1\n")
    with pytest.raises(ConfigError):
        io.load_model(path)
    with pytest.raises(ConfigError):
        io.load_model(tmp_path / "missing.ini")


def test_config_overrides_and_validation(small_cfg, tmp_path):
    cfg = load_experiment(small_cfg, {"seed": 9, "eta": None})
    assert cfg.seed == 9 and cfg.eta == 200.0 and cfg.n_poses == 300
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nn_poses = 0\n")
    with pytest.raises(ConfigError):
        load_experiment(bad)
    bad.write_text("[experiment]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_experiment(bad)
    bad.write_text("[experiment]\nmodel = nowhere.ini\n")
    with pytest.raises(ConfigError):
        load_experiment(bad)


def test_model_file_reference(tmp_path):
    (tmp_path / "m.ini").write_text(io.dump_model(default_geometry(), DEFAULT_LINK_MASSES))
    (tmp_path / "e.ini").write_text("[experiment]\nmodel = m.ini\nn_poses = 10\n")
    cfg = load_experiment(tmp_path / "e.ini")
    assert cfg.geometry.n_links == 7 and cfg.link_masses == DEFAULT_LINK_MASSES


def test_substreams_are_named_and_stable():
    assert substream_seed(0, "pool") == substream_seed(0, "pool")
    assert len({substream_seed(0, n) for n in ("pool", "ensemble", "baseline")}) == 3
    assert substream_seed(0, "pool") != substream_seed(1, "pool")


def test_config_error_exit_code(tmp_path):
    assert main(["gen-poses", "--config", str(tmp_path / "none.ini")]) == EXIT_CONFIG
    assert main(["gen-poses", "--out", str(tmp_path), "--noise", "1.5"]) == EXIT_CONFIG


def test_pipeline_writes_expected_files(small_cfg, tmp_path, capsys):
    out = tmp_path / "o"
    for cmd in ("gen-poses", "gen-betas", "filter", "learn", "eval"):
        assert run(small_cfg, out, cmd) == 0
    names = {p.name for p in out.iterdir()}
    assert {"pool.csv", "betas.csv", "filtered.csv", "baseline.csv", "learning_curve.csv",
            "beta.csv", "eval.csv", "filter_report.json", "eval_report.json"} <= names
    cols, data, meta = io.read_csv(out / "filtered.csv")
    assert cols[:2] == ["order", "pool_index"] and cols[-2:] == ["aggregate_error", "max_error"]
    assert meta["seed"] == "3"
    cols, _, _ = io.read_csv(out / "learning_curve.csv")
    assert cols == ["iteration", "pose_id", "abs_error_pre", "abs_error_post", "mass_sum"]
    report = json.loads((out / "filter_report.json").read_text())
    assert report["seed"] == 3 and "wall_time" not in report and len(report["input_hash"]) == 16
    assert io.read_betas(out / "betas.csv").shape == (10, 28)


def test_learn_from_truth_stops_immediately(small_cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert run(small_cfg, out, "learn", "--init", "truth", "--early-stop") == 0
    report = json.loads((out / "learn_report.json").read_text())
    assert report["metrics"]["iterations"] == 10
    assert report["metrics"]["max_beta_change"] < 1e-12


def test_filter_then_learn_meets_tolerance(tmp_path, capsys):
    out = tmp_path / "desk"
    assert main(["filter", "--out", str(out), "--n-poses", "2000", "--n-betas", "100"]) == 0
    assert main(["learn", "--out", str(out), "--n-poses", "2000", "--n-betas", "100"]) == 0
    metrics = json.loads((out / "learn_report.json").read_text())["metrics"]
    assert metrics["test_max_error_final"] <= 2e-3
    assert metrics["test_max_error_initial"] > metrics["test_max_error_final"]


def test_convergence_failure_exit_code(small_cfg, tmp_path, capsys):
    assert run(small_cfg, tmp_path / "o", "learn", "--xtol", "1e-9") == EXIT_CONVERGENCE


def test_divergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "weak.ini"
    cfg.write_text(SMALL + "noise = 0.9\n[controller]\ntau_max = 0.5\n")
    assert run(cfg, tmp_path / "o", "simulate", "--duration", "5") == EXIT_DIVERGENCE


def test_simulate_worker_parity(small_cfg, tmp_path, monkeypatch, capsys):
    outs = []
    for workers in ("1", "2"):
        monkeypatch.setenv("WIPCOM_WORKERS", workers)
        out = tmp_path / f"w{workers}"
        assert run(small_cfg, out, "simulate", "--runs", "2") == 0
        outs.append(out)
    for name in ("trace_000.csv", "trace_001.csv", "simulate_report.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    cols, data, _ = io.read_csv(outs[0] / "trace_000.csv")
    assert cols == ["t", "x", "xdot", "theta", "thetadot", "tau_w", "fhat_x", "fhat_theta"]
