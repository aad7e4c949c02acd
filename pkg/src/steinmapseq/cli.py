"""Command-line benchmark runner and result persistence.

Subcommands:
  run          generate datasets, run estimators, write CSV results
  export       re-emit a completed run's results as csv or json
  oracle-check run the decoder-vs-brute-force and gradient-check suites

Per-(run, estimator) RNG streams are derived by a counter-based split of
the base seed, so results are independent of scheduling and of the worker
pool size. Wall-clock times go to timings.csv; summary.csv holds only
deterministic columns so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
import zlib
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import baselines, mapseq_dp, models, scenarios
from .svgd import KernelSpec, SvgdConfig

_DATASET_STREAM = 2 ** 31  # distinct from estimator stream tags (< 2^31)

KALMAN_ESTIMATORS = ("ekf", "eks", "eks_gt", "iekf", "ieks", "ieks_gt")
PARTICLE_ESTIMATORS = ("pf", "pf_map", "pf_map_seq", "spf", "spf_map",
                       "stein_map_seq")
DEFAULT_PARAMS = {"iekf": 3, "ieks": 3, "ieks_gt": 3, "pf": 1000,
                  "pf_map": 100, "pf_map_seq": 100, "spf": 10,
                  "spf_map": 10, "stein_map_seq": 10}


class ConfigError(ValueError):
    pass


@dataclass
class EstimatorSpec:
    name: str
    param: Optional[int] = None

    @classmethod
    def parse(cls, text):
        parts = text.strip().split(":")
        name = parts[0]
        if name not in KALMAN_ESTIMATORS + PARTICLE_ESTIMATORS:
            raise ConfigError(f"unknown estimator: {name}")
        if len(parts) == 1:
            return cls(name, DEFAULT_PARAMS.get(name))
        if len(parts) != 2:
            raise ConfigError(f"bad estimator spec: {text}")
        try:
            return cls(name, int(parts[1]))
        except ValueError as e:
            raise ConfigError(f"bad estimator parameter in: {text}") from e

    @property
    def key(self):
        return self.name if self.param is None else f"{self.name}:{self.param}"


@dataclass
class RunConfig:
    scenario: str
    estimators: List[EstimatorSpec]
    n_runs: int = 1
    horizon: Optional[int] = None
    base_seed: int = 0
    out_dir: Optional[str] = None
    jobs: int = 1
    svgd_iterations: int = 1000
    svgd_step: float = 0.001
    init_policy: str = "propagate_sample"
    emit_plot_data: bool = False

    def __post_init__(self):
        if self.scenario not in scenarios.SCENARIO_GENERATORS:
            raise ConfigError(f"unknown scenario: {self.scenario}")
        if self.n_runs < 1 or self.jobs < 1:
            raise ConfigError("n_runs and jobs must be >= 1")
        if self.horizon is None:
            self.horizon = scenarios.SCENARIO_DEFAULT_HORIZON[self.scenario]


@dataclass
class RunResult:
    config: RunConfig
    rows: List[dict]
    aggregates: dict
    trajectories: dict
    clouds: dict = field(default_factory=dict)

    @property
    def n_failed(self):
        return sum(1 for r in self.rows if r["error"] is not None)


def _estimator_rng(base_seed, run_idx, est_key):
    tag = zlib.crc32(est_key.encode()) & 0x7FFFFFFF
    return np.random.default_rng(
        np.random.SeedSequence(entropy=base_seed, spawn_key=(run_idx, tag)))


def _dataset_for_run(cfg, run_idx):
    seq = np.random.SeedSequence(entropy=cfg.base_seed,
                                 spawn_key=(run_idx, _DATASET_STREAM))
    seed = int(seq.generate_state(1)[0])
    return scenarios.generate(cfg.scenario, seed, cfg.horizon), seed


def _svgd_config(cfg, n_particles):
    return SvgdConfig(num_particles=n_particles,
                      step_size=cfg.svgd_step,
                      iterations=cfg.svgd_iterations,
                      kernel=KernelSpec(),
                      init_policy=cfg.init_policy)


def _belief0(dataset):
    return baselines.GaussianBelief(
        dataset.x0, np.diag(dataset.meta["prior_cov_diag"]))


def _means_to_trajectory(x0, beliefs):
    states = np.vstack([x0[None, :], [b.mean for b in beliefs]])
    return mapseq_dp.Trajectory(states)


def _run_estimator(spec, dataset, cfg, rng):
    """Returns (trajectory, diverged, particle_history_or_None)."""
    model, diff, obs = dataset.model, dataset.diff_model, dataset.observations
    name, n = spec.name, spec.param
    if name == "ekf":
        return _means_to_trajectory(
            dataset.x0, baselines.ekf(diff, _belief0(dataset), obs)), False, None
    if name == "eks":
        return _means_to_trajectory(
            dataset.x0, baselines.eks(diff, _belief0(dataset), obs)), False, None
    if name == "eks_gt":
        traj = baselines.ieks(diff, dataset.truth, obs, 1, _belief0(dataset))
        return traj, traj.diverged, None
    if name == "iekf":
        return _means_to_trajectory(
            dataset.x0,
            baselines.iekf(diff, _belief0(dataset), obs, n)), False, None
    if name == "ieks":
        init = _means_to_trajectory(
            dataset.x0, baselines.iekf(diff, _belief0(dataset), obs, n))
        traj = baselines.ieks(diff, init, obs, n, _belief0(dataset))
        return traj, traj.diverged, None
    if name == "ieks_gt":
        traj = baselines.ieks(diff, dataset.truth, obs, n, _belief0(dataset))
        return traj, traj.diverged, None
    if name == "pf":
        out = baselines.particle_filter(model, dataset.x0, obs, n, rng,
                                        dataset.meta["prior_cov_diag"])
        return out.mmse, False, None
    if name == "pf_map":
        out = baselines.particle_filter(model, dataset.x0, obs, n, rng,
                                        dataset.meta["prior_cov_diag"])
        return baselines.pf_map(out, model), False, None
    if name == "pf_map_seq":
        out = baselines.particle_filter(model, dataset.x0, obs, n, rng,
                                        dataset.meta["prior_cov_diag"])
        return baselines.pf_map_seq(out, model), False, None
    if name == "spf":
        out = baselines.stein_particle_filter(model, dataset.x0, obs,
                                              _svgd_config(cfg, n), rng)
        return out.mmse, False, None
    if name == "spf_map":
        out = baselines.stein_particle_filter(model, dataset.x0, obs,
                                              _svgd_config(cfg, n), rng)
        return baselines.spf_map(out, model), False, None
    if name == "stein_map_seq":
        traj, hist, _ = mapseq_dp.stein_map_seq(model, dataset.x0, obs,
                                                _svgd_config(cfg, n), rng)
        return traj, False, hist
    raise ConfigError(f"unknown estimator: {name}")


def _execute_job(cfg, run_idx, spec, retain_particles):
    dataset, ds_seed = _dataset_for_run(cfg, run_idx)
    rng = _estimator_rng(cfg.base_seed, run_idx, spec.key)
    row = dict(run=run_idx, estimator=spec.key, seed=ds_seed, rmse=None,
               rmse_heading=None, wall_ms=None, diverged=False, error=None)
    traj = hist = None
    t0 = time.perf_counter()
    try:
        traj, diverged, hist = _run_estimator(spec, dataset, cfg, rng)
        row["diverged"] = bool(diverged)
        row["rmse"] = scenarios.rmse(
            traj, dataset.truth,
            angular_components=dataset.model.angular_components,
            components=dataset.meta.get("rmse_components"))
        if dataset.meta.get("rmse_components") is not None:
            ang = sorted(dataset.model.angular_components)
            if ang:
                row["rmse_heading"] = scenarios.rmse(
                    traj, dataset.truth,
                    angular_components=dataset.model.angular_components,
                    components=ang)
    except Exception as e:  # recorded, harness continues
        row["error"] = f"{type(e).__name__}: {e}"
    row["wall_ms"] = 1000.0 * (time.perf_counter() - t0)
    states = traj.states if traj is not None else None
    clouds = None
    if retain_particles and hist is not None:
        clouds = [ps.particles for ps in hist.sets]
    return row, states, clouds


def run_benchmark(cfg):
    """Run every estimator on every generated dataset; deterministic given
    the base seed and independent of the parallelism degree."""
    jobs = [(r, spec) for r in range(cfg.n_runs) for spec in cfg.estimators]
    retain = {(0, spec.key): cfg.emit_plot_data and spec.name == "stein_map_seq"
              for spec in cfg.estimators}
    results = {}
    if cfg.jobs == 1:
        for r, spec in jobs:
            results[(r, spec.key)] = _execute_job(
                cfg, r, spec, retain.get((r, spec.key), False))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            futs = {ex.submit(_execute_job, cfg, r, spec,
                              retain.get((r, spec.key), False)): (r, spec.key)
                    for r, spec in jobs}
            for fut in concurrent.futures.as_completed(futs):
                results[futs[fut]] = fut.result()

    rows, trajectories, clouds = [], {}, {}
    for r in range(cfg.n_runs):
        for spec in cfg.estimators:
            row, states, cl = results[(r, spec.key)]
            rows.append(row)
            if states is not None:
                trajectories[(r, spec.key)] = states
            if cl is not None:
                clouds[(r, spec.key)] = cl

    aggregates = {}
    for spec in cfg.estimators:
        vals = [row["rmse"] for row in rows
                if row["estimator"] == spec.key and row["rmse"] is not None]
        walls = [row["wall_ms"] for row in rows if row["estimator"] == spec.key]
        agg = dict(
            n_runs=cfg.n_runs,
            n_failed=sum(1 for row in rows if row["estimator"] == spec.key
                         and row["error"] is not None),
            n_diverged=sum(1 for row in rows if row["estimator"] == spec.key
                           and row["diverged"]),
            mean_rmse=float(np.mean(vals)) if vals else None,
            std_rmse=float(np.std(vals)) if vals else None,
            q25=float(np.percentile(vals, 25)) if vals else None,
            median=float(np.percentile(vals, 50)) if vals else None,
            q75=float(np.percentile(vals, 75)) if vals else None,
            mean_wall_ms=float(np.mean(walls)) if walls else None,
        )
        aggregates[spec.key] = agg
    result = RunResult(cfg, rows, aggregates, trajectories, clouds)
    if cfg.out_dir:
        export_results(result, cfg.out_dir, "csv")
        _write_results_json(result, cfg.out_dir)
        _write_effective_config(cfg, cfg.out_dir)
        if cfg.emit_plot_data:
            dataset, _ = _dataset_for_run(cfg, 0)
            emit_plot_data(result, dataset, cfg.out_dir)
    return result


def _g17(v):
    if v is None:
        return ""
    return format(float(v), ".17g")


def _estimator_columns(key):
    name, _, param = key.partition(":")
    return name, param


def export_results(result, out_dir, fmt="csv"):
    """Write summary/runs/timings CSVs (or a single JSON document)."""
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "json":
        _write_results_json(result, out_dir)
        return
    if fmt != "csv":
        raise ConfigError(f"unknown export format: {fmt}")
    cfg = result.config
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "N_s", "mean_rmse", "std_rmse", "n_diverged"])
        for spec in cfg.estimators:
            agg = result.aggregates[spec.key]
            name, param = _estimator_columns(spec.key)
            w.writerow([name, param, _g17(agg["mean_rmse"]),
                        _g17(agg["std_rmse"]), agg["n_diverged"]])
    with open(os.path.join(out_dir, "runs.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "estimator", "rmse", "seed"])
        for row in result.rows:
            w.writerow([row["run"], row["estimator"], _g17(row["rmse"]),
                        row["seed"]])
    with open(os.path.join(out_dir, "timings.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "estimator", "wall_ms"])
        for row in result.rows:
            w.writerow([row["run"], row["estimator"],
                        format(row["wall_ms"], ".3f")])
    failures = [row for row in result.rows if row["error"] is not None]
    if failures:
        with open(os.path.join(out_dir, "failures.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run_id", "estimator", "error"])
            for row in failures:
                w.writerow([row["run"], row["estimator"], row["error"]])
    for (r, key), states in result.trajectories.items():
        d = os.path.join(out_dir, "trajectories", f"run{r:03d}")
        os.makedirs(d, exist_ok=True)
        fname = key.replace(":", "_") + ".csv"
        with open(os.path.join(d, fname), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x{c}" for c in range(states.shape[1])])
            for t, row_vals in enumerate(states):
                w.writerow([t] + [_g17(v) for v in row_vals])


def load_trajectory_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in row[1:]] for row in rows[1:]])


def _write_results_json(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    doc = dict(
        config=_config_doc(result.config),
        rows=result.rows,
        aggregates=result.aggregates,
        trajectories={f"{r}|{k}": states.tolist()
                      for (r, k), states in result.trajectories.items()},
    )
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(doc, fh, indent=1)


def _config_doc(cfg):
    doc = asdict(cfg)
    doc["estimators"] = [spec.key for spec in cfg.estimators]
    return doc


def _write_effective_config(cfg, out_dir):
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(_config_doc(cfg), fh, indent=1)


def load_results(out_dir):
    with open(os.path.join(out_dir, "results.json")) as fh:
        doc = json.load(fh)
    cfgd = doc["config"]
    cfg = RunConfig(
        scenario=cfgd["scenario"],
        estimators=[EstimatorSpec.parse(e) for e in cfgd["estimators"]],
        n_runs=cfgd["n_runs"], horizon=cfgd["horizon"],
        base_seed=cfgd["base_seed"], out_dir=cfgd["out_dir"],
        jobs=cfgd["jobs"], svgd_iterations=cfgd["svgd_iterations"],
        svgd_step=cfgd["svgd_step"], init_policy=cfgd["init_policy"],
        emit_plot_data=cfgd["emit_plot_data"])
    trajectories = {}
    for key, states in doc["trajectories"].items():
        r, _, est = key.partition("|")
        trajectories[(int(r), est)] = np.asarray(states)
    return RunResult(cfg, doc["rows"], doc["aggregates"], trajectories)


def emit_plot_data(result, dataset, out_dir):
    """Plot-ready CSVs: truth vs estimates per step, and particle clouds
    for a few selected steps of run 0."""
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    truth = dataset.truth.states
    T, n = truth.shape[0] - 1, truth.shape[1]
    blocked = dataset.meta.get("blocked_steps")
    keys = [spec.key for spec in result.config.estimators
            if (0, spec.key) in result.trajectories]
    with open(os.path.join(fig_dir, "truth_vs_estimates_run000.csv"), "w",
              newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["t"] + [f"truth_x{c}" for c in range(n)]
        for key in keys:
            header += [f"{key.replace(':', '_')}_x{c}" for c in range(n)]
        if blocked is not None:
            header.append("blocked")
        w.writerow(header)
        for t in range(T + 1):
            row = [t] + [_g17(v) for v in truth[t]]
            for key in keys:
                row += [_g17(v) for v in result.trajectories[(0, key)][t]]
            if blocked is not None:
                row.append(int(bool(blocked[t])))
            w.writerow(row)
    for (r, key), cloud_list in result.clouds.items():
        steps = sorted({1, max(1, T // 2), T})
        for t in steps:
            path = os.path.join(fig_dir,
                                f"particles_run{r:03d}_t{t:04d}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([f"x{c}" for c in range(n)])
                for p in cloud_list[t - 1]:
                    w.writerow([_g17(v) for v in p])


def save_dataset_csv(dataset, path):
    """Dataset serialization: t, truth components, observation components,
    mask bits (observations start at t=1)."""
    truth = dataset.truth.states
    n = truth.shape[1]
    m = dataset.observations[0].values.shape[0] if dataset.observations else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"truth_x{c}" for c in range(n)] +
                   [f"z{c}" for c in range(m)] +
                   [f"mask{c}" for c in range(m)])
        for t in range(truth.shape[0]):
            row = [t] + [_g17(v) for v in truth[t]]
            if t == 0:
                row += [""] * (2 * m)
            else:
                z = dataset.observations[t - 1]
                row += [_g17(v) for v in z.values]
                row += [int(b) for b in z.validity_mask]
            w.writerow(row)


# ---------------------------------------------------------------------------
# oracle-check suites
# ---------------------------------------------------------------------------

def _truncated_support_model(base, cap):
    """Wrap a model's likelihood with a hard support cutoff so particles
    outside |x| <= cap score -inf (exercises the -inf decode paths)."""
    base_batch = base.lik_logpdf_batch

    def lik_logpdf_batch(X, z):
        out = np.array(base_batch(X, z), dtype=float)
        out[np.abs(X[:, 0]) > cap] = -np.inf
        return out

    def lik_logpdf(x, z):
        return float(lik_logpdf_batch(np.asarray(x, dtype=float)[None, :], z)[0])

    kwargs = {f.name: getattr(base, f.name)
              for f in base.__dataclass_fields__.values()}
    kwargs["likelihood_logpdf"] = lik_logpdf
    kwargs["lik_logpdf_batch"] = lik_logpdf_batch
    return models.ModelSpec(**kwargs)


def run_dp_oracle_suite(n_instances=200, seed=0, max_T=5, max_N=4):
    """Random DP-vs-exhaustive-enumeration equivalence instances; returns
    the number of failures."""
    from .svgd import ParticleSet

    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(n_instances):
        T = int(rng.integers(1, max_T + 1))
        N = int(rng.integers(1, max_N + 1))
        model, _ = scenarios.make_linear_gaussian_model(
            a=float(rng.uniform(0.5, 1.2)), q=float(rng.uniform(0.5, 2.0)))
        if rng.uniform() < 0.4:
            # some particles (sometimes all) get -inf likelihoods
            model = _truncated_support_model(model, float(rng.uniform(0.5, 4.0)))
        x0 = rng.standard_normal(1)
        sets = [ParticleSet(3.0 * rng.standard_normal((N, 1)), t)
                for t in range(1, T + 1)]
        hist = mapseq_dp.ParticleHistory(sets, x0)
        obs = [models.Observation(rng.standard_normal(1), t)
               for t in range(1, T + 1)]
        try:
            dp_traj, _ = mapseq_dp.decode_particle_history(hist, obs, model)
        except mapseq_dp.DecodeFailureError:
            dp_traj = None
        try:
            bf_traj = mapseq_dp.brute_force_map(hist, obs, model)
        except mapseq_dp.DecodeFailureError:
            bf_traj = None
        if dp_traj is None or bf_traj is None:
            same = dp_traj is None and bf_traj is None
        else:
            same = (np.array_equal(dp_traj.states, bf_traj.states)
                    and dp_traj.score == bf_traj.score)
        if not same:
            failures += 1
    return failures


def run_gradient_suite(n_points=100, seed=0):
    """Gradient consistency of every shipped model; returns failures."""
    rng = np.random.default_rng(seed)
    failures = 0
    cases = []
    ds_a = scenarios.gen_scenario_a(seed, 5)
    cases.append(("a", ds_a, 8.0))
    ds_b = scenarios.gen_scenario_b(seed, 5)
    cases.append(("b", ds_b, 3.0))
    ds_c = scenarios.gen_scenario_c(seed, 60)
    cases.append(("c", ds_c, 3.0))
    ds_lg = scenarios.gen_linear_gaussian(seed, 5)
    cases.append(("lg", ds_lg, 3.0))
    for name, ds, scale in cases:
        model = ds.model
        for _ in range(n_points):
            z = ds.observations[int(rng.integers(len(ds.observations)))]
            x_prev = ds.x0 + scale * rng.standard_normal(model.state_dim)
            x = ds.x0 + scale * rng.standard_normal(model.state_dim)
            if name == "c":
                x = np.clip(x, 0.5, 7.5)
                x_prev = np.clip(x_prev, 0.5, 7.5)
            ok, _ = models.gradient_check(model, x_prev, x, z)
            if not ok:
                failures += 1
    return failures


# ---------------------------------------------------------------------------
# argparse surface
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="steinmapseq",
        description="State-estimation benchmark harness (SVGD particle "
                    "supports + dynamic-programming MAP sequence decoding)")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a Monte Carlo benchmark")
    run_p.add_argument("--scenario", help="a | b | c | lg")
    run_p.add_argument("--estimators",
                       help="comma list, e.g. ekf,pf:1000,stein_map_seq:10")
    run_p.add_argument("--runs", type=int, default=None)
    run_p.add_argument("--horizon", type=int, default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None,
                       help="output directory (default $STEINMAPSEQ_OUT or "
                            "./results)")
    run_p.add_argument("--jobs", type=int, default=None)
    run_p.add_argument("--particles", type=int, default=None,
                       help="override the particle count of every particle "
                            "estimator given without :N")
    run_p.add_argument("--svgd-iters", type=int, default=None)
    run_p.add_argument("--svgd-step", type=float, default=None)
    run_p.add_argument("--init-policy", default=None,
                       choices=["propagate_sample", "propagate_mean",
                                "carry_over"])
    run_p.add_argument("--plot-data", action="store_true", default=None,
                       help="emit figure-ready CSVs for run 0")
    run_p.add_argument("--config", default=None,
                       help="JSON config file; flags override its fields")

    exp_p = sub.add_parser("export", help="re-emit results from a run dir")
    exp_p.add_argument("--from", dest="src", required=True)
    exp_p.add_argument("--format", choices=["csv", "json"], default="csv")
    exp_p.add_argument("--out", default=None)

    orc_p = sub.add_parser("oracle-check",
                           help="run decoder and gradient oracle suites")
    orc_p.add_argument("--instances", type=int, default=200)
    orc_p.add_argument("--points", type=int, default=100)
    orc_p.add_argument("--seed", type=int, default=0)
    return p


def _config_from_args(args):
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file: {e}") from e

    def pick(flag_val, key, default):
        if flag_val is not None:
            return flag_val
        return file_cfg.get(key, default)

    scenario = pick(args.scenario, "scenario", None)
    if scenario is None:
        raise ConfigError("--scenario is required (flag or config file)")
    est_text = pick(args.estimators, "estimators", None)
    if est_text is None:
        raise ConfigError("--estimators is required (flag or config file)")
    if isinstance(est_text, str):
        est_list = [e for e in est_text.split(",") if e.strip()]
    else:
        est_list = list(est_text)
    if not est_list:
        specs = []
    else:
        specs = [EstimatorSpec.parse(e) for e in est_list]
    if args.particles is not None:
        for spec in specs:
            if spec.name in PARTICLE_ESTIMATORS:
                spec.param = args.particles
    out_dir = pick(args.out, "out_dir",
                   os.environ.get("STEINMAPSEQ_OUT", "./results"))
    return RunConfig(
        scenario=scenario,
        estimators=specs,
        n_runs=int(pick(args.runs, "n_runs", 1)),
        horizon=pick(args.horizon, "horizon", None),
        base_seed=int(pick(args.seed, "base_seed", 0)),
        out_dir=out_dir,
        jobs=int(pick(args.jobs, "jobs", 1)),
        svgd_iterations=int(pick(args.svgd_iters, "svgd_iterations", 1000)),
        svgd_step=float(pick(args.svgd_step, "svgd_step", 0.001)),
        init_policy=pick(args.init_policy, "init_policy", "propagate_sample"),
        emit_plot_data=bool(pick(args.plot_data, "emit_plot_data", False)),
    )


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        try:
            cfg = _config_from_args(args)
        except (ConfigError, models.ContractViolationError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return 1
        result = run_benchmark(cfg)
        for spec in cfg.estimators:
            agg = result.aggregates[spec.key]
            mean = "n/a" if agg["mean_rmse"] is None else f"{agg['mean_rmse']:.4f}"
            print(f"{spec.key:>22s}  mean RMSE {mean}  "
                  f"(failed {agg['n_failed']}, diverged {agg['n_diverged']})")
        if result.n_failed:
            print(f"{result.n_failed} estimator run(s) failed", file=sys.stderr)
            return 2
        return 0
    if args.command == "export":
        try:
            result = load_results(args.src)
        except OSError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 1
        export_results(result, args.out or args.src, args.format)
        return 0
    if args.command == "oracle-check":
        dp_failures = run_dp_oracle_suite(args.instances, args.seed)
        print(f"decoder-vs-enumeration: {args.instances} instances, "
              f"{dp_failures} failures")
        grad_failures = run_gradient_suite(args.points, args.seed)
        print(f"gradient checks: 4 models x {args.points} points, "
              f"{grad_failures} failures")
        return 0 if dp_failures == 0 and grad_failures == 0 else 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
