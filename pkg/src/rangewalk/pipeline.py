"""Staged experiment pipeline: caching, manifests, reports, verification.

Stages run in order generate -> graph -> cuts -> metrics -> walk ->
estimate -> verify -> report.  Trajectory and estimate artifacts are
cached (keyed by their generating parameters / the config hash) with
sha256 sidecars, so reruns are cheap and byte-identical; a corrupted
cache file fails loudly with its name.  The manifest inventories every
file under the output directory.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import dijkstra

from . import __version__
from .config import ExperimentConfig, config_hash, dump_config
from .cuts import brute_force_cut_times, export_cuts_csv, find_cut_times
from .graph import build_range_graph, export_graph, last_exit_decomposition, \
    mu_measure_prefix
from .lattice import generate_trajectory, load_trajectory, save_trajectory
from .resistance import exact_two_point_resistance, export_profile_csv, \
    metric_profile, oracle_distance_profile, oracle_resistance_profile
from .scaling import MIN_SEEDS, SlowlyVaryingTable, compare_to_limit, \
    environment_tables, estimate_alpha_tau, estimate_lambda_prefix, \
    estimate_lambda_two_sided, estimate_slowly_varying, exit_time_samples, \
    exit_time_scaling, heat_kernel_profile_deviation, \
    rescaled_process_samples, sample_two_sided_y, solve_time_scale
from .seeds import derive_key
from .walker import exact_smoothed_kernel, export_heat_kernel_csv, \
    export_walk_csv, heat_kernel_estimate, simulate_walk

STAGES = ("generate", "graph", "cuts", "metrics", "walk", "estimate",
          "verify", "report")


class PipelineError(RuntimeError):
    """A stage failed; the manifest records which one and why."""


@dataclass
class RunManifest:
    config_hash: str
    version: str
    stages: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return canonical_json(asdict(self))


def canonical_json(obj) -> str:
    """Stable byte-identical JSON for reports and manifests."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cache_dir(cfg: ExperimentConfig, out_dir: Path) -> Path:
    env = os.environ.get("RANGEWALK_CACHE_DIR")
    path = Path(env) if env else out_dir / "cache"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_with_checksum(path: Path, writer) -> None:
    writer(path)
    path.with_suffix(path.suffix + ".sha256").write_text(sha256_file(path))


def _read_checked(path: Path) -> None:
    sidecar = path.with_suffix(path.suffix + ".sha256")
    if sidecar.exists():
        if sha256_file(path) != sidecar.read_text().strip():
            raise PipelineError(f"checksum mismatch: {path}")


def _cached_trajectory(cfg: ExperimentConfig, cache: Path, dimension: int,
                       horizon: int, seed: int):
    name = f"traj-d{dimension}-h{horizon}-s{seed & 0xFFFF_FFFF_FFFF_FFFF}.rwr4"
    path = cache / name
    if path.exists():
        _read_checked(path)
        return load_trajectory(path), path
    traj = generate_trajectory(dimension, horizon, seed=seed)
    _write_with_checksum(path, lambda p: save_trajectory(traj, p))
    return traj, path


def _ensemble_seeds(cfg: ExperimentConfig):
    """(n, seed_index, trajectory seed) triples of the estimate ensemble."""
    for i, n in enumerate(cfg.n_grid):
        for k in range(cfg.seeds_per_point):
            yield int(n), k, derive_key(cfg.master_seed, 10, i, k)


# ---------------------------------------------------------------------------
# stages

def stage_generate(cfg: ExperimentConfig, out: Path) -> list:
    cache = cache_dir(cfg, out)
    files = []
    for n, _, seed in _ensemble_seeds(cfg):
        horizon = int(math.ceil(cfg.horizon_factor * n))
        _, path = _cached_trajectory(cfg, cache, cfg.dimension, horizon, seed)
        files.append(path)
    return files


def _seed0_graph(cfg: ExperimentConfig, out: Path, n: int):
    cache = cache_dir(cfg, out)
    horizon = int(math.ceil(cfg.horizon_factor * n))
    seed = derive_key(cfg.master_seed, 10, list(cfg.n_grid).index(n), 0)
    traj, _ = _cached_trajectory(cfg, cache, cfg.dimension, horizon, seed)
    return traj, build_range_graph(traj)


def stage_graph(cfg: ExperimentConfig, out: Path) -> list:
    gdir = out / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    files = []
    summary_lines = ["n,vertices,edges,mu_total"]
    for n in cfg.n_grid:
        traj, graph = _seed0_graph(cfg, out, n)
        epath = gdir / f"graph-n{n}-edges.txt"
        vpath = gdir / f"graph-n{n}-vertices.txt"
        export_graph(graph, epath, vpath)
        files += [epath, vpath]
        summary_lines.append(
            f"{n},{graph.n_vertices},{graph.n_edges},{int(graph.degree.sum())}")
    spath = gdir / "summary.csv"
    spath.write_text("\n".join(summary_lines) + "\n")
    files.append(spath)
    return files


def stage_cuts(cfg: ExperimentConfig, out: Path) -> list:
    cdir = out / "cuts"
    cdir.mkdir(parents=True, exist_ok=True)
    files = []
    for n in cfg.n_grid:
        traj, graph = _seed0_graph(cfg, out, n)
        cuts = find_cut_times(traj, graph=graph)
        path = cdir / f"cuts-n{n}.csv"
        export_cuts_csv(cuts, path)
        files.append(path)
    return files


def stage_metrics(cfg: ExperimentConfig, out: Path) -> list:
    mdir = out / "metrics"
    mdir.mkdir(parents=True, exist_ok=True)
    files = []
    for n in cfg.n_grid:
        traj, graph = _seed0_graph(cfg, out, n)
        cuts = find_cut_times(traj, graph=graph)
        step = max(1, graph.horizon // 512)
        grid = np.arange(0, graph.horizon + 1, step)
        prof = metric_profile(graph, cuts, grid=grid, rtol=cfg.solver_rtol)
        path = mdir / f"profile-n{n}.csv"
        export_profile_csv(prof, path)
        files.append(path)
    return files


def stage_walk(cfg: ExperimentConfig, out: Path) -> list:
    wdir = out / "walk"
    wdir.mkdir(parents=True, exist_ok=True)
    n = int(cfg.n_grid[-1])
    traj, graph = _seed0_graph(cfg, out, n)
    cuts = find_cut_times(traj, graph=graph)
    steps = min(graph.horizon, 4096)
    trace = simulate_walk(graph, 0, steps, seed=cfg.master_seed)
    tpath = wdir / f"trace-n{n}.csv"
    export_walk_csv(trace, tpath)
    xs = np.asarray(cfg.heat_kernel_x_grid, dtype=np.float64)
    target_times = np.minimum((xs * n).astype(np.int64), graph.horizon)
    targets = graph.trace_ids[target_times].astype(np.int64)
    est = heat_kernel_estimate(graph, min(steps, 512), targets,
                               replicas=min(cfg.heat_kernel_replicas, 2000),
                               seed=cfg.master_seed)
    prof = metric_profile(graph, cuts, grid=target_times,
                          rtol=cfg.solver_rtol)
    kpath = wdir / f"heat_kernel-n{n}.csv"
    export_heat_kernel_csv(est, prof.distance.tolist(),
                           prof.resistance.tolist(), kpath)
    return [tpath, kpath]


def _estimate_payload(cfg: ExperimentConfig) -> dict:
    """The full statistical run at config scales (pure; no files)."""
    min_seeds = min(MIN_SEEDS, cfg.seeds_per_point)
    tables = environment_tables(cfg.dimension, cfg.n_grid,
                                cfg.seeds_per_point, cfg.master_seed,
                                horizon_factor=cfg.horizon_factor,
                                rtol=cfg.solver_rtol)
    lam = estimate_lambda_prefix(tables, cfg.master_seed,
                                 min_seeds=min_seeds)
    n_max = int(max(cfg.n_grid))
    window = cfg.two_sided_window or int(math.ceil(math.sqrt(n_max)))
    y_values = sample_two_sided_y(cfg.dimension, cfg.two_sided_pairs,
                                  window, cfg.master_seed)
    lam2 = estimate_lambda_two_sided(y_values, cfg.master_seed)
    exponents = {}
    if len(cfg.n_grid) >= 2:
        fit = estimate_slowly_varying(tables, cfg.master_seed,
                                      min_seeds=min_seeds)
        cut_fit = estimate_alpha_tau(tables, cfg.master_seed)
        psi_tilde, phi = fit.psi_tilde, fit.phi
        exponents = {
            "psi_tilde": asdict(fit.slope_psi_tilde),
            "phi": asdict(fit.slope_phi),
            "ncut": asdict(cut_fit.slope_ncut),
        }
        alpha, tau = cut_fit.alpha.value, cut_fit.tau
    else:
        psi_tilde = SlowlyVaryingTable(
            {n: float(v.mean()) for n, v in tables.psi_tilde.items()})
        phi = SlowlyVaryingTable(
            {n: float(v.mean()) for n, v in tables.phi.items()})
        n0 = int(cfg.n_grid[0])
        alpha = float(tables.ncut[n0].mean() / (n0 * math.log(n0) ** -0.5))
        tau = 1.0 / alpha
    lambda_hat = lam.pooled.value
    psi = psi_tilde.scaled(lambda_hat)

    ks_blocks = []
    for steps in cfg.walk_lengths:
        n_eff = solve_time_scale(psi, int(steps))
        samples = rescaled_process_samples(
            cfg.dimension, n_eff, cfg.t_grid, cfg.process_samples,
            cfg.master_seed, phi, psi)
        report = compare_to_limit(samples, cfg.master_seed,
                                  min_samples=min(500, cfg.process_samples))
        ks_blocks.append({
            "walk_steps": int(steps), "n_scale": n_eff,
            "boundary_fraction": samples.boundary_fraction,
            "ks": report.ks, "moments": report.moments,
        })

    exit_rows = {}
    censored = {}
    for r in cfg.exit_radii:
        phi_r = float(phi.at(r))
        psi_r = float(psi_tilde.at(r))
        env_horizon = int(24 * r / phi_r)
        max_steps = int(30 * r * r * psi_r / phi_r ** 2 + 1000)
        taus, cens = exit_time_samples(cfg.dimension, float(r),
                                       cfg.exit_samples_per_radius,
                                       cfg.master_seed, env_horizon, max_steps)
        exit_rows[float(r)] = taus
        censored[float(r)] = cens
    exit_report = exit_time_scaling(exit_rows, psi_tilde, phi,
                                    band=cfg.exit_band,
                                    censored_by_r=censored)

    heat = _heat_kernel_check(cfg, lambda_hat, psi, phi)

    return {
        "master_seed": cfg.master_seed,
        "constants": {
            "lambda": lambda_hat,
            "lambda_prefix": asdict(lam.pooled),
            "lambda_two_sided": asdict(lam2),
            "lambda_per_n": {str(n): asdict(e) for n, e in lam.per_n.items()},
            "alpha": alpha,
            "tau": tau,
        },
        "tables": {
            "psi_tilde": {str(n): v for n, v in psi_tilde.table.items()},
            "phi": {str(n): v for n, v in phi.table.items()},
            "psi": {str(n): v for n, v in psi.table.items()},
        },
        "exponents": exponents,
        "ks": ks_blocks,
        "heat_kernel": heat,
        "exit_times": {
            "rows": [asdict(row) for row in exit_report.rows],
            "max_over_min": exit_report.max_over_min,
            "within_band": exit_report.within_band,
            "band": exit_report.band,
        },
        "config": dump_config(cfg),
    }


def _heat_kernel_check(cfg: ExperimentConfig, lambda_hat: float,
                       psi: SlowlyVaryingTable,
                       phi: SlowlyVaryingTable) -> list:
    """Averaged smoothed-kernel profile against the reflected Gaussian."""
    t = 1.0
    n_eff = solve_time_scale(psi, cfg.heat_kernel_duration)
    m = int(round(t * n_eff * n_eff * float(psi.at(n_eff))))
    xs = np.asarray(cfg.heat_kernel_x_grid, dtype=np.float64)
    horizon = int(48 * n_eff)
    acc = np.zeros(xs.shape[0])
    acc_sq = np.zeros(xs.shape[0])
    for k in range(cfg.heat_kernel_environments):
        env_seed = derive_key(cfg.master_seed, 14, k)
        traj = generate_trajectory(cfg.dimension, horizon, seed=env_seed)
        graph = build_range_graph(traj)
        target_times = np.minimum((xs * n_eff).astype(np.int64),
                                  graph.horizon)
        targets = graph.trace_ids[target_times].astype(np.int64)
        est = heat_kernel_estimate(graph, m, targets,
                                   replicas=cfg.heat_kernel_replicas,
                                   seed=env_seed)
        acc += est.values
        acc_sq += est.values ** 2
    envs = cfg.heat_kernel_environments
    mean_vals = acc / envs
    spread = np.sqrt(np.maximum(acc_sq / envs - mean_vals ** 2, 0.0))
    stderr = spread / math.sqrt(max(envs, 1))
    out = heat_kernel_profile_deviation(lambda_hat, n_eff, t, xs, mean_vals)
    out.update({
        "walk_steps": m, "environments": envs,
        "replicas": cfg.heat_kernel_replicas,
        "stderr_scaled": (lambda_hat * n_eff * stderr).tolist(),
    })
    return [out]


def stage_estimate(cfg: ExperimentConfig, out: Path) -> list:
    cache = cache_dir(cfg, out)
    cpath = cache / f"estimate-{config_hash(cfg)}.json"
    if cpath.exists():
        _read_checked(cpath)
    else:
        payload = _estimate_payload(cfg)
        _write_with_checksum(cpath, lambda p: p.write_text(
            canonical_json(payload)))
    return [cpath]


def verify_suite(cfg: ExperimentConfig) -> dict:
    """Capped oracle-equivalence and invariant checks; failures are data."""
    checks = {}

    mismatches = 0
    for seed in range(20):
        traj = generate_trajectory(cfg.dimension, 1500, seed=derive_key(
            cfg.master_seed, 20, seed))
        if not np.array_equal(find_cut_times(traj).times,
                              brute_force_cut_times(traj).times):
            mismatches += 1
    checks["cut_oracle"] = {"passed": mismatches == 0,
                            "mismatches": mismatches, "seeds": 20}

    worst = 0.0
    for seed in range(5):
        traj = generate_trajectory(cfg.dimension, 800, seed=derive_key(
            cfg.master_seed, 21, seed))
        graph = build_range_graph(traj)
        cuts = find_cut_times(traj, graph=graph)
        grid = np.arange(0, 801, 29)
        prof = metric_profile(graph, cuts, grid=grid, parts=("resistance",),
                              rtol=cfg.solver_rtol, force_iterative=True)
        oracle = oracle_resistance_profile(graph, grid)
        rel = np.max(np.abs(prof.resistance - oracle)
                     / np.maximum(oracle, 1.0))
        worst = max(worst, float(rel))
    checks["resistance_oracle"] = {"passed": worst < 1e-8,
                                   "max_rel_gap": worst, "seeds": 5}

    bad = 0
    for seed in range(10):
        traj = generate_trajectory(cfg.dimension, 2000, seed=derive_key(
            cfg.master_seed, 22, seed))
        graph = build_range_graph(traj)
        for n in (0, 700, 2000):
            y = last_exit_decomposition(graph, traj, n)
            if int(y.sum()) != mu_measure_prefix(graph, n):
                bad += 1
    checks["volume_identity"] = {"passed": bad == 0, "violations": bad,
                                 "seeds": 10}

    viol = 0
    worst_dev = 0.0
    for seed in range(3):
        traj = generate_trajectory(cfg.dimension, 1000, seed=derive_key(
            cfg.master_seed, 23, seed))
        graph = build_range_graph(traj)
        cuts = find_cut_times(traj, graph=graph)
        prof = metric_profile(graph, cuts, rtol=cfg.solver_rtol)
        if np.any(prof.resistance > prof.distance + 1e-9):
            viol += 1
        dval = oracle_distance_profile(graph, prof.grid)
        worst_dev = max(worst_dev, float(np.max(np.abs(prof.distance - dval))))
        cut_r = prof.resistance[cuts.times]
        if np.any(cut_r < np.arange(len(cuts)) - 1e-12):
            viol += 1
    checks["metric_invariants"] = {"passed": viol == 0 and worst_dev == 0.0,
                                   "violations": viol,
                                   "distance_oracle_gap": worst_dev}

    from .lattice import load_fixed_path
    path_graph = build_range_graph(load_fixed_path(
        [[i] + [0] * (cfg.dimension - 1) for i in range(6)]))
    cyc = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
    cyc_graph = build_range_graph(load_fixed_path(cyc))
    from fractions import Fraction
    checks["exact_fixtures"] = {
        "passed": (exact_two_point_resistance(path_graph, 0, 5) == Fraction(5)
                   and exact_two_point_resistance(cyc_graph, 0, 1)
                   == Fraction(3, 4)),
    }

    a = environment_tables(cfg.dimension, [256], 3, cfg.master_seed)
    b = environment_tables(cfg.dimension, [256], 3, cfg.master_seed)
    checks["determinism"] = {
        "passed": bool(np.array_equal(a.psi_tilde[256], b.psi_tilde[256])
                       and np.array_equal(a.ncut[256], b.ncut[256])),
    }

    return {"checks": checks,
            "all_passed": all(c["passed"] for c in checks.values())}


def stage_verify(cfg: ExperimentConfig, out: Path) -> list:
    path = out / "verify.json"
    path.write_text(canonical_json(verify_suite(cfg)))
    return [path]


def stage_report(cfg: ExperimentConfig, out: Path) -> list:
    cache = cache_dir(cfg, out)
    cpath = cache / f"estimate-{config_hash(cfg)}.json"
    if not cpath.exists():
        stage_estimate(cfg, out)
    _read_checked(cpath)
    rpath = out / "report.json"
    rpath.write_text(cpath.read_text())
    return [rpath]


_STAGE_FNS = {
    "generate": stage_generate,
    "graph": stage_graph,
    "cuts": stage_cuts,
    "metrics": stage_metrics,
    "walk": stage_walk,
    "estimate": stage_estimate,
    "verify": stage_verify,
    "report": stage_report,
}


def run_pipeline(cfg: ExperimentConfig, out_dir=None,
                 stages=None) -> RunManifest:
    """Run the staged pipeline and write manifest.json into the out dir.

    Estimator replica floors are relaxed to the configured seed counts so
    smoke configs run end to end; production configs keep the full floors.
    """
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config_hash(cfg), version=__version__)
    (out / "config.echo").write_text(dump_config(cfg))
    todo = list(STAGES if stages is None else stages)
    unknown = set(todo) - set(STAGES)
    if unknown:
        raise PipelineError(f"unknown stage(s): {sorted(unknown)}")
    failed = None
    for name in STAGES:
        if name not in todo:
            manifest.stages[name] = "skipped"
            continue
        try:
            _STAGE_FNS[name](cfg, out)
            manifest.stages[name] = "ok"
        except Exception as exc:
            manifest.stages[name] = f"failed: {exc}"
            failed = (name, exc)
            break
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest.files[str(path.relative_to(out))] = sha256_file(path)
    (out / "manifest.json").write_text(manifest.to_json())
    if failed:
        raise PipelineError(f"stage {failed[0]} failed: {failed[1]}")
    return manifest
