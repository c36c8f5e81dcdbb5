"""Benchmark suites: convergence to the analytic tilted target, particle
scaling, resampling-schedule ablation, perturbation-error trends, and the
best-of-n comparison.  Each suite writes a CSV of (setting, seed, metric)
rows plus per-setting summary rows, and optionally a plot of the summary.
"""
from __future__ import annotations

import copy
import csv
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import io as kio
from .backends import analytic_tilted_moments
from .errors import InvalidArgument
from .rewards import PerturbedReward
from .schedule import build_alpha_bar_schedule
from .steering import PotentialConfig, best_of_n, steer_v_prediction

SUITES = ("convergence", "scaling", "schedule", "prop1", "bon")


def _steer_once(config, seed, mode=None, k=None, reward_override=None,
                final_correction=None, bridge=None):
    from .cli import build_backend, build_reward, build_resampling, validate_config

    cfg = copy.deepcopy(config)
    cfg["seed"] = int(seed)
    if mode is not None:
        cfg["steering"]["mode"] = mode
    if k is not None:
        cfg["steering"]["k"] = int(k)
    if final_correction is not None:
        cfg["steering"]["final_correction"] = bool(final_correction)
    validate_config(cfg)
    steering = cfg["steering"]
    backend = build_backend(cfg)
    reward, _ = build_reward(cfg, backend)
    if reward_override is not None:
        reward = reward_override(reward)
    steps = int(steering["steps"])
    schedule = build_alpha_bar_schedule(steps, steering.get("schedule_kind", "cosine"))
    resampling = build_resampling(steering, steps)
    potential = PotentialConfig(lam=float(steering.get("lam", 0.0)), schedule=resampling)
    return steer_v_prediction(
        backend, reward, schedule, resampling, potential, int(steering["k"]), int(seed),
        transition=steering.get("transition", "ddim"),
        diversify=steering.get("diversify", "none"),
        final_correction=bool(steering.get("final_correction", False)),
    )


def _bon_once(config, seed, k):
    from .cli import build_backend, build_reward, validate_config

    cfg = copy.deepcopy(config)
    cfg["seed"] = int(seed)
    cfg["steering"]["k"] = int(k)
    validate_config(cfg)
    backend = build_backend(cfg)
    reward, _ = build_reward(cfg, backend)
    schedule = build_alpha_bar_schedule(
        int(cfg["steering"]["steps"]), cfg["steering"].get("schedule_kind", "cosine")
    )
    return best_of_n(backend, reward, int(k), int(seed), schedule=schedule,
                     transition=cfg["steering"].get("transition", "ddim"))


def _tilted_target(config):
    from .cli import build_backend

    backend = build_backend(config)
    coeffs = config["reward"]["coefficients"]
    lam = float(config["steering"].get("lam", 0.0))
    mean, cov = analytic_tilted_moments(backend.model, coeffs, lam)
    return float(mean[0]), float(cov[0, 0])


def binned_tv(samples, mean, var, bins=24, span=4.5) -> float:
    """Total variation between an empirical sample and N(mean, var) over a
    fixed binning."""
    sd = float(np.sqrt(var))
    edges = np.linspace(mean - span * sd, mean + span * sd, bins + 1)
    hist, _ = np.histogram(samples, bins=edges)
    emp = np.zeros(bins + 2)
    emp[1:-1] = hist / len(samples)
    emp[0] = np.mean(samples < edges[0])
    emp[-1] = np.mean(samples >= edges[-1])
    cdf = norm.cdf(edges, loc=mean, scale=sd)
    target = np.concatenate([[cdf[0]], np.diff(cdf), [1.0 - cdf[-1]]])
    return float(0.5 * np.abs(emp - target).sum())


def _uniform_draw(result, seed):
    g = np.random.default_rng(0xD0A + int(seed))
    return float(result.final_states[g.integers(len(result.final_states)), 0])


def suite_convergence(config, bench_cfg):
    """|empirical tilted mean - analytic mean| as the run count grows."""
    runs_grid = bench_cfg.get("runs_grid", [50, 200, 800])
    seed0 = int(config.get("seed", 0))
    mean, var = _tilted_target(config)
    rows = []
    draws = []
    total = max(runs_grid)
    for i in range(total):
        r = _steer_once(config, seed0 + i, final_correction=True)
        draws.append(_uniform_draw(r, seed0 + i))
    for n in runs_grid:
        sample = np.array(draws[:n])
        rows.append(["convergence", n, seed0, abs(sample.mean() - mean)])
        rows.append(["convergence", n, "var_error", abs(sample.var() - var)])
    summary = [["convergence-summary", n, "mean_abs_error",
                next(r[3] for r in rows if r[1] == n and r[2] == seed0)] for n in runs_grid]
    return rows, summary


def suite_scaling(config, bench_cfg):
    k_grid = bench_cfg.get("k_grid", [1, 2, 4, 8])
    seeds = int(bench_cfg.get("seeds", 30))
    seed0 = int(config.get("seed", 0))
    rows = []
    for k in k_grid:
        for s in range(seeds):
            r = _steer_once(config, seed0 + s, k=k)
            rows.append(["scaling", k, seed0 + s, r.selected_reward])
    summary = []
    for k in k_grid:
        vals = [row[3] for row in rows if row[1] == k]
        summary.append(["scaling-summary", k, "mean", float(np.mean(vals))])
    return rows, summary


def suite_schedule(config, bench_cfg):
    modes = bench_cfg.get("modes", ["early", "linear", "late"])
    seeds = int(bench_cfg.get("seeds", 30))
    seed0 = int(config.get("seed", 0))
    rows = []
    for mode in modes:
        for s in range(seeds):
            r = _steer_once(config, seed0 + s, mode=mode)
            rows.append(["schedule", mode, seed0 + s, r.selected_reward])
    summary = []
    for mode in modes:
        vals = [row[3] for row in rows if row[1] == mode]
        summary.append(["schedule-summary", mode, "mean", float(np.mean(vals))])
    return rows, summary


def suite_prop1(config, bench_cfg):
    """Total variation to the analytic tilted target as the intermediate
    reward perturbation grows."""
    etas = bench_cfg.get("etas", [0.0, 0.05, 0.1, 0.2])
    runs = int(bench_cfg.get("runs", 500))
    perturb_seed = int(bench_cfg.get("perturb_seed", 0))
    seed0 = int(config.get("seed", 0))
    mean, var = _tilted_target(config)
    rows = []
    for eta in etas:
        draws = []
        for i in range(runs):
            r = _steer_once(
                config, seed0 + i, final_correction=True,
                reward_override=lambda base, e=eta: PerturbedReward(base, e, perturb_seed),
            )
            draws.append(_uniform_draw(r, seed0 + i))
        rows.append(["prop1", eta, seed0, binned_tv(np.array(draws), mean, var)])
    summary = [["prop1-summary", row[1], "tv", row[3]] for row in rows]
    return rows, summary


def suite_bon(config, bench_cfg):
    seeds = int(bench_cfg.get("seeds", 30))
    k = int(bench_cfg.get("k", config["steering"].get("k", 4)))
    seed0 = int(config.get("seed", 0))
    rows = []
    for s in range(seeds):
        steer = _steer_once(config, seed0 + s, k=k)
        bon = _bon_once(config, seed0 + s, k)
        rows.append(["bon", "steer", seed0 + s, steer.selected_reward])
        rows.append(["bon", "best-of-n", seed0 + s, bon.selected_reward])
    summary = []
    for setting in ("steer", "best-of-n"):
        vals = [row[3] for row in rows if row[1] == setting]
        summary.append(["bon-summary", setting, "mean", float(np.mean(vals))])
    return rows, summary


def run_suite(suite: str, config: dict, out_dir, plot: bool = False) -> Path:
    if suite not in SUITES:
        raise InvalidArgument(f"unknown suite {suite!r}; expected one of {SUITES}")
    bench_cfg = config.get("bench", {})
    fn = {
        "convergence": suite_convergence,
        "scaling": suite_scaling,
        "schedule": suite_schedule,
        "prop1": suite_prop1,
        "bon": suite_bon,
    }[suite]
    rows, summary = fn(config, bench_cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"bench_{suite}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(kio.BENCH_HEADER)
        for row in rows + summary:
            writer.writerow(row)
    kio.write_manifest(out / f"bench_{suite}_manifest.json", {
        "suite": suite,
        "schema": kio.BENCH_SCHEMA,
        "config": config,
        "stamp": kio.config_stamp(config),
    })
    if plot:
        _plot_summary(summary, out / f"bench_{suite}.png", suite)
    return csv_path


def _plot_summary(summary, path, suite):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [str(row[1]) for row in summary]
    values = [float(row[3]) for row in summary]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(values)), labels)
    ax.set_title(f"{suite} summary")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
