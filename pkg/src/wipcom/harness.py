"""Seeded experiment orchestration behind the command line.

Every command derives its randomness from one root seed through named
sub-streams, so adding a consumer never shifts another one's draws. Each
command writes its CSVs and a ``<command>_report.json`` into the output
directory; reports contain no timing so reruns are byte-identical.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .adrc import TRACE_COLUMNS, ControllerConfig, balance_run
from .errors import ConfigError
from .kinematics import ChainGeometry, default_geometry, feature_matrix
from .learner import LearningConfig, fit
from .mass_model import (
    DEFAULT_LINK_MASSES,
    BetaEnsemble,
    generate_ensemble,
    make_truth,
    perturb,
)
from .metalearn import FilteredPoses, PosePool, filter_poses, generate_pool, random_baseline

log = logging.getLogger(__name__)


def substream_seed(root: int, name: str) -> int:
    """Stable 63-bit seed for a named consumer of the root seed."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(name.encode())])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def worker_count() -> int:
    """Worker cap from ``WIPCOM_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("WIPCOM_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    name: str = "desk"
    seed: int = 0
    n_poses: int = 2000
    n_betas: int = 100
    noise: float = 0.2
    ensemble_noise: float = 0.5
    target_error: float = 0.02
    eta: float = 200.0
    x_tol: float = 2e-3
    n_consecutive: int = 10
    project: bool = False
    early_stop: bool = False
    q1_noise: float = 0.0
    test_fraction: float = 0.2
    duration: float = 40.0
    pose_index: int = 0
    n_runs: int = 1
    out: str = "out"
    model_path: str | None = None
    geometry: ChainGeometry = field(default_factory=default_geometry, repr=False)
    link_masses: tuple = DEFAULT_LINK_MASSES
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    source_text: str = ""

    def validate(self) -> None:
        checks = [
            (self.n_poses >= 1, "n_poses must be >= 1"),
            (self.n_betas >= 1, "n_betas must be >= 1"),
            (0 < self.noise < 1, "noise must lie in (0, 1)"),
            (0 < self.ensemble_noise < 1, "ensemble_noise must lie in (0, 1)"),
            (self.target_error > 0, "target_error must be positive"),
            (self.eta > 0, "eta must be positive"),
            (self.x_tol > 0, "x_tol must be positive"),
            (self.q1_noise >= 0, "q1_noise must be non-negative"),
            (self.n_consecutive >= 1, "n_consecutive must be >= 1"),
            (0 < self.test_fraction < 1, "test_fraction must lie in (0, 1)"),
            (self.duration > 0, "duration must be positive"),
            (self.n_runs >= 1, "n_runs must be >= 1"),
            (0 < self.controller.dt <= 0.01, "controller dt must lie in (0, 0.01]"),
            (self.controller.omega_o > 0, "omega_o must be positive"),
            (self.controller.tau_max > 0, "tau_max must be positive"),
            (len(self.link_masses) == self.geometry.n_links, "need one mass per link"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def beta_true(self) -> np.ndarray:
        return make_truth(self.geometry, self.link_masses)

    @property
    def learning(self) -> LearningConfig:
        return LearningConfig(eta=self.eta, x_tol=self.x_tol, n_consecutive=self.n_consecutive,
                              project=self.project, total_mass=self.geometry.total_mass,
                              early_stop=self.early_stop)

    def sub_seed(self, name: str) -> int:
        return substream_seed(self.seed, name)

    def input_hash(self, command: str) -> str:
        payload = {k: v for k, v in asdict(self).items()
                   if k not in ("geometry", "source_text", "out", "controller", "model_path")}
        payload["controller"] = asdict(self.controller)
        payload["model"] = io.dump_model(self.geometry, self.link_masses)
        payload["command"] = command
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_EXPERIMENT_KEYS = {
    "name": str, "seed": int, "n_poses": int, "n_betas": int, "noise": float,
    "ensemble_noise": float, "target_error": float, "eta": float, "x_tol": float,
    "n_consecutive": int, "project": "bool", "early_stop": "bool", "q1_noise": float,
    "test_fraction": float, "duration": float,
    "pose_index": int, "n_runs": int, "out": str,
}


def load_experiment(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read an experiment INI; ``overrides`` (e.g. from CLI flags) win.

    The model comes from ``[model]``/``[linkN]`` sections of the same file,
    or from the file named by ``model`` in ``[experiment]``.
    """
    cfg = ExperimentConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config not found: {path}")
        text = path.read_text()
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        cfg.source_text = text
        if cp.has_section("experiment"):
            sec = cp["experiment"]
            for key in sec:
                if key == "model":
                    continue
                if key not in _EXPERIMENT_KEYS:
                    raise ConfigError(f"unknown experiment key: {key}")
                kind = _EXPERIMENT_KEYS[key]
                try:
                    value = sec.getboolean(key) if kind == "bool" else kind(sec[key])
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {sec[key]}") from exc
                setattr(cfg, key, value)
            if "model" in sec:
                model_path = (path.parent / sec["model"]).resolve()
                cfg.model_path = str(model_path)
                cfg.geometry, masses = io.load_model(model_path)
                if masses is not None:
                    cfg.link_masses = tuple(masses)
        if cp.has_section("model"):
            cfg.geometry, masses = io.parse_model(cp)
            if masses is not None:
                cfg.link_masses = tuple(masses)
        if cp.has_section("controller"):
            c = cp["controller"]
            try:
                cfg.controller = ControllerConfig(
                    Q=tuple(float(v) for v in c.get("q_diag", "300, 100, 500, 200").split(",")),
                    R=c.getfloat("r", 1.0), omega_o=c.getfloat("omega_o", 50.0),
                    tau_max=c.getfloat("tau_max", 60.0), dt=c.getfloat("dt", 1e-3),
                    compensate=c.getboolean("compensate", True),
                    inject_input=c.getboolean("inject_input", True),
                    use_true_rates=c.getboolean("use_true_rates", False))
            except ValueError as exc:
                raise ConfigError(f"invalid controller config: {exc}") from exc
            if len(cfg.controller.Q) != 4:
                raise ConfigError("q_diag needs four entries")
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


@dataclass
class RunReport:
    experiment: str
    command: str
    input_hash: str
    seed: int
    metrics: dict
    files: list
    ok: bool = True
    wall_time: float = 0.0

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("wall_time")
        return json.dumps(d, indent=2, sort_keys=True, default=_jsonable) + "\n"

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / f"{self.command}_report.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


def _finish(cfg: ExperimentConfig, command: str, metrics: dict, files: list, t0: float,
            ok: bool = True) -> RunReport:
    out = Path(cfg.out)
    report = RunReport(cfg.name, command, cfg.input_hash(command), cfg.seed, metrics,
                       sorted(str(Path(f).relative_to(out)) for f in files), bool(ok),
                       time.perf_counter() - t0)
    report.write(out)
    log.info("%s finished in %.2fs", command, report.wall_time)
    return report


# --- shared building blocks ------------------------------------------------

def build_pool(cfg: ExperimentConfig) -> PosePool:
    pool_file = Path(cfg.out) / "pool.csv"
    seed = cfg.sub_seed("pool")
    if pool_file.is_file():
        _, poses, meta = io.read_csv(pool_file)
        if meta.get("seed") == str(seed) and poses.shape[1] == cfg.geometry.n_links:
            return PosePool(poses, feature_matrix(cfg.geometry, poses), seed,
                            float(meta.get("acceptance_rate", "nan")))
    return generate_pool(cfg.geometry, cfg.beta_true, cfg.n_poses, seed)


def build_ensemble(cfg: ExperimentConfig, name: str = "ensemble") -> BetaEnsemble:
    return generate_ensemble(cfg.beta_true, cfg.n_betas, cfg.target_error, cfg.geometry,
                             cfg.sub_seed(name), noise_fraction=cfg.ensemble_noise)


def build_filtered(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Filtered poses and their pool indices, from disk when available."""
    path = Path(cfg.out) / "filtered.csv"
    if path.is_file():
        cols, data, meta = io.read_csv(path)
        if meta.get("seed") == str(cfg.seed):
            q = data[:, [cols.index(f"q{i + 1}") for i in range(cfg.geometry.n_links)]]
            return q, data[:, cols.index("pool_index")].astype(int)
    pool = build_pool(cfg)
    res = filter_poses(pool, build_ensemble(cfg).betas, cfg.eta, cfg.x_tol, cfg.n_consecutive)
    return res.poses, res.indices


# --- commands ----------------------------------------------------------------

def run_gen_poses(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    pool = generate_pool(cfg.geometry, cfg.beta_true, cfg.n_poses, cfg.sub_seed("pool"))
    f = io.write_poses(Path(cfg.out) / "pool.csv", pool.poses,
                       {"experiment": cfg.name, "root_seed": cfg.seed, "seed": pool.seed,
                        "acceptance_rate": repr(pool.acceptance_rate)})
    return _finish(cfg, "gen-poses", {"n_poses": len(pool),
                                      "acceptance_rate": pool.acceptance_rate}, [f], t0)


def run_gen_betas(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    ens = build_ensemble(cfg)
    f = io.write_betas(Path(cfg.out) / "betas.csv", ens.betas.T,
                       {"experiment": cfg.name, "root_seed": cfg.seed, "seed": ens.seed,
                        "noise_fraction": ens.noise_fraction, "target_error": ens.target_error})
    metrics = {"n_betas": ens.size, "attempts": ens.attempts,
               "probe_error_mean": float(ens.probe_errors.mean()),
               "probe_error_std": float(ens.probe_errors.std()),
               "probe_error_min": float(ens.probe_errors.min())}
    return _finish(cfg, "gen-betas", metrics, [f], t0)


def _write_filtered(path, res: FilteredPoses, meta) -> Path:
    L = res.poses.shape[1]
    cols = ["order", "pool_index"] + [f"q{i + 1}" for i in range(L)] + ["aggregate_error", "max_error"]
    rows = ([k + 1, res.indices[k], *res.poses[k], res.aggregate_errors[k], res.max_errors[k]]
            for k in range(len(res)))
    return io.write_csv(path, cols, rows, meta)


def run_filter(cfg: ExperimentConfig, baseline: bool = True) -> RunReport:
    t0 = time.perf_counter()
    pool = build_pool(cfg)
    betas_file = Path(cfg.out) / "betas.csv"
    if betas_file.is_file() and io.read_csv(betas_file)[2].get("seed") == str(cfg.sub_seed("ensemble")):
        betas = io.read_betas(betas_file).T
    else:
        betas = build_ensemble(cfg).betas
    res = filter_poses(pool, betas, cfg.eta, cfg.x_tol, cfg.n_consecutive)
    meta = {"experiment": cfg.name, "seed": cfg.seed, "pool_seed": pool.seed,
            "eta": cfg.eta, "x_tol": cfg.x_tol, "n_consecutive": cfg.n_consecutive,
            "status": res.status}
    files = [_write_filtered(Path(cfg.out) / "filtered.csv", res, meta)]
    metrics = {"poses_to_converge": len(res), "status": res.status,
               "final_max_error": float(res.max_errors[-1])}
    if baseline:
        base = random_baseline(pool, betas, cfg.eta, cfg.x_tol, cfg.n_consecutive,
                               seed=cfg.sub_seed("baseline"))
        files.append(_write_filtered(Path(cfg.out) / "baseline.csv", base,
                                     {**meta, "status": base.status,
                                      "baseline_seed": cfg.sub_seed("baseline")}))
        metrics.update(baseline_poses=len(base), baseline_status=base.status,
                       ratio=len(base) / len(res))
    return _finish(cfg, "filter", metrics, files, t0, res.converged)


def observed_features(cfg: ExperimentConfig, poses) -> np.ndarray:
    """Features of the stream as measured, with optional Gaussian noise on q1."""
    poses = np.array(poses, dtype=float)
    if cfg.q1_noise > 0:
        rng = np.random.default_rng(cfg.sub_seed("observe"))
        poses[:, 0] += rng.normal(0.0, cfg.q1_noise, len(poses))
    return feature_matrix(cfg.geometry, poses)


def _initial_beta(cfg: ExperimentConfig, init: str, stream: str) -> np.ndarray:
    if init == "truth":
        return cfg.beta_true
    if init == "perturbed":
        return perturb(cfg.beta_true, cfg.noise, cfg.sub_seed(stream))
    path = Path(init)
    if not path.is_file():
        raise ConfigError(f"beta file not found: {path}")
    return io.read_betas(path)[0]


def run_learn(cfg: ExperimentConfig, init: str = "perturbed") -> RunReport:
    """Train one estimate on the filtered stream and score it on fresh poses.

    By default the whole filtered stream is consumed, since its length was
    already fixed by the filter's stopping rule over the ensemble; with
    ``early_stop`` the fit ends after ``n_consecutive`` quiet poses.
    """
    t0 = time.perf_counter()
    poses, idx = build_filtered(cfg)
    Phi = observed_features(cfg, poses)
    beta0 = _initial_beta(cfg, init, "learn")
    res = fit(beta0, Phi, cfg.learning, pose_ids=idx)
    tr = res.trace
    out = Path(cfg.out)
    meta = {"experiment": cfg.name, "seed": cfg.seed, "eta": cfg.eta, "x_tol": cfg.x_tol,
            "stop_reason": res.stop_reason}
    f1 = io.write_csv(out / "learning_curve.csv",
                      ["iteration", "pose_id", "abs_error_pre", "abs_error_post", "mass_sum"],
                      zip(tr.iterations, tr.pose_ids, np.abs(tr.error_pre),
                          np.abs(tr.error_post), tr.mass_sum), meta)
    f2 = io.write_betas(out / "beta.csv", np.vstack([beta0, res.beta]),
                        {**meta, "rows": "initial,final"})
    test = generate_pool(cfg.geometry, cfg.beta_true, 200, cfg.sub_seed("test"))
    err0 = np.abs(test.features.T @ beta0)
    err1 = np.abs(test.features.T @ res.beta)
    tail = np.abs(tr.error_pre[-cfg.n_consecutive:])
    ok = res.stop_reason == "converged" or (len(tr) >= cfg.n_consecutive and tail.max() < cfg.x_tol)
    metrics = {"stop_reason": res.stop_reason, "iterations": len(tr),
               "max_beta_change": float(np.max(np.abs(res.beta - beta0))),
               "test_mean_error_initial": float(err0.mean()), "test_max_error_initial": float(err0.max()),
               "test_mean_error_final": float(err1.mean()), "test_max_error_final": float(err1.max())}
    return _finish(cfg, "learn", metrics, [f1, f2], t0, ok)


def _simulate_cell(args):
    cfg, k, pose, beta_est = args
    res = balance_run(cfg.geometry, cfg.beta_true, beta_est, pose, cfg.duration, cfg.controller,
                      raise_on_timeout=False)
    return k, res


def run_simulate(cfg: ExperimentConfig, init: str = "perturbed") -> RunReport:
    t0 = time.perf_counter()
    pool = build_pool(cfg)
    beta_est = _initial_beta(cfg, init, "simulate")
    cells = [(cfg, k, pool.poses[(cfg.pose_index + k) % len(pool)], beta_est)
             for k in range(cfg.n_runs)]
    workers = min(worker_count(), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = dict(ex.map(_simulate_cell, cells))
    else:
        results = dict(map(_simulate_cell, cells))
    out = Path(cfg.out)
    files, runs = [], []
    for k in range(cfg.n_runs):
        r = results[k]
        name = "trace.csv" if cfg.n_runs == 1 else f"trace_{k:03d}.csv"
        files.append(io.write_csv(out / name, TRACE_COLUMNS, r.trace,
                                  {"experiment": cfg.name, "seed": cfg.seed,
                                   "pose_index": (cfg.pose_index + k) % len(pool),
                                   "saturated_steps": int(r.saturated.sum())}))
        runs.append({"settled": r.settled, "settle_time": r.settle_time if r.settled else None,
                     "peak_torque": r.peak_torque, "final_x_com": r.final_x_com,
                     "angle_error": float(r.settled_pose[0] - r.true_balance_angle),
                     "rest_position": float(r.trace[-1, 1])})
    ok = all(r["settled"] and abs(r["final_x_com"]) < 1e-3 for r in runs)
    return _finish(cfg, "simulate", {"runs": runs}, files, t0, ok)


def run_eval(cfg: ExperimentConfig, init: str = "perturbed") -> RunReport:
    """Train on part of the filtered stream, score checkpoints on the rest."""
    t0 = time.perf_counter()
    poses, idx = build_filtered(cfg)
    n = len(idx)
    n_test = max(1, int(round(cfg.test_fraction * n)))
    if n - n_test < 1:
        raise ConfigError("filtered stream too short for a train/test split")
    rng = np.random.default_rng(cfg.sub_seed("split"))
    test_mask = np.zeros(n, dtype=bool)
    test_mask[rng.choice(n, n_test, replace=False)] = True
    Phi_train = observed_features(cfg, poses)[:, ~test_mask]
    Phi_test = feature_matrix(cfg.geometry, poses[test_mask])
    beta0 = _initial_beta(cfg, init, "eval")
    learning = LearningConfig(**{**asdict(cfg.learning), "early_stop": False})
    res = fit(beta0, Phi_train, learning, pose_ids=idx[~test_mask], checkpoint_every=1)
    n_train = Phi_train.shape[1]
    marks = sorted({0, n_train} | {2 ** j for j in range(20) if 2 ** j < n_train})
    rows = []
    for it in marks:
        err = np.abs(Phi_test.T @ res.checkpoints[it])
        rows.append((it, err.mean(), err.max()))
    f = io.write_csv(Path(cfg.out) / "eval.csv", ["iteration", "test_mean_error", "test_max_error"],
                     rows, {"experiment": cfg.name, "seed": cfg.seed, "n_train": n_train,
                            "n_test": n_test})
    metrics = {"n_train": n_train, "n_test": n_test,
               "initial_mean_error": float(rows[0][1]), "initial_max_error": float(rows[0][2]),
               "final_mean_error": float(rows[-1][1]), "final_max_error": float(rows[-1][2])}
    return _finish(cfg, "eval", metrics, [f], t0, metrics["final_max_error"] <= cfg.x_tol)
