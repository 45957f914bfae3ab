"""Experiment harness: runs, threshold frontiers, RL training and curve export.

Every command takes a YAML config and writes CSV result files plus a
reproducibility manifest. Result rows carry the config hash; re-running with
the same config and seeds reproduces the numeric columns byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, channel, geom, mlp, radio, rl, simcore
from .config import ConfigError, Scenario, config_hash, scenario_from_dict, scenario_to_dict
from .geom import N_CELLS, Trajectory
from .policies import (AcceptAll, AdmissionPolicy, BlockAll, Clairvoyant, ThresholdResource,
                       ThresholdUE, feature_length)

POLICY_KINDS = ("accept_all", "block_all", "clairvoyant", "threshold_ue",
                "threshold_resource", "ql", "dql")


def build_policy(spec: dict, scenario: Scenario, seed) -> AdmissionPolicy:
    """Instantiate the policy named by a config `policy` section (evaluation mode)."""
    kind = spec.get("kind")
    if kind not in POLICY_KINDS:
        raise ConfigError(f"policy.kind must be one of {POLICY_KINDS}, got {kind!r}")
    if kind == "accept_all":
        return AcceptAll()
    if kind == "block_all":
        return BlockAll()
    if kind == "clairvoyant":
        return Clairvoyant()
    if kind == "threshold_ue":
        if "tau_ue" not in spec:
            raise ConfigError("missing required key: policy.tau_ue")
        return ThresholdUE(spec["tau_ue"])
    if kind == "threshold_resource":
        if "tau_fraction" not in spec:
            raise ConfigError("missing required key: policy.tau_fraction")
        return ThresholdResource(spec["tau_fraction"], scenario.radio.bandwidth_hz)
    if "checkpoint" not in spec:
        raise ConfigError(f"missing required key: policy.checkpoint (needed for {kind})")
    return rl.load_checkpoint(spec["checkpoint"])


# -- single runs and plans -----------------------------------------------------

def result_columns(n_types: int) -> list[str]:
    cols = ["scenario_id", "policy", "seed", "mean_interarrival", "n_requests"]
    for k in range(n_types):
        cols += [f"accept_prob_t{k + 1}", f"block_prob_t{k + 1}", f"drop_prob_t{k + 1}"]
    cols += ["discounted_reward", "config_hash"]
    return cols


def result_row(scenario: Scenario, policy_name: str, seed, res: simcore.RunResult,
               cfg_hash: str) -> dict:
    m = res.metrics
    row = {
        "scenario_id": scenario.scenario_id,
        "policy": policy_name,
        "seed": seed if np.isscalar(seed) else "-".join(str(s) for s in seed),
        "mean_interarrival": scenario.arrivals.mean_interarrival,
        "n_requests": res.n_requests,
    }
    for k in range(scenario.n_types):
        row[f"accept_prob_t{k + 1}"] = m.acceptance_prob(k)
        row[f"block_prob_t{k + 1}"] = m.blocking_prob(k)
        row[f"drop_prob_t{k + 1}"] = m.dropping_prob(k)
    # total event rewards (drop term discounted), normalized per 10^3 requests
    row["discounted_reward"] = m.reward * 1000.0 / res.n_requests
    row["config_hash"] = cfg_hash
    return row


def _run_job(job: dict) -> dict:
    """Worker entry: one (scenario, policy, seed) simulation."""
    scenario = scenario_from_dict(job["scenario"])
    policy = build_policy(job["policy"], scenario, job["seed"])
    event_log = job.get("event_log_path")
    sim = simcore.Simulation(scenario, policy, job["seed"],
                             oracle_rate=job.get("oracle_rate", True),
                             log_events=event_log is not None)
    res = sim.run()
    if event_log:
        cols = ["t", "event", "ue", "cell"]
        write_csv(event_log, cols,
                  [{c: ev.get(c, "") for c in cols} for ev in res.events])
    return result_row(scenario, policy.name, job["seed"], res, job["config_hash"])


def run_plan(jobs: list[dict], workers: int = 1) -> list[dict]:
    """Execute jobs, merging results in plan order regardless of completion order."""
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=1))


def write_csv(path: str, columns: list[str], rows: list[dict]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_manifest(path: str, cfg_hash: str, seeds: list, extra: dict | None = None) -> None:
    manifest = {"config_hash": cfg_hash, "seeds": seeds, "code_version": __version__,
                "written_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    manifest.update(extra or {})
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)


def _seeds_from(raw: dict, cli_seed: int | None) -> list[int]:
    if cli_seed is not None:
        return [cli_seed]
    seeds = (raw.get("run") or {}).get("seeds", [1])
    if isinstance(seeds, int):
        seeds = [seeds]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("run.seeds must be distinct")
    return list(seeds)


def cmd_run(raw: dict, out_dir: str, cli_seed: int | None = None, workers: int = 1) -> str:
    """Run the configured policy over the seed list; write results.csv + manifest."""
    scenario = scenario_from_dict(raw)
    if "policy" not in raw:
        raise ConfigError("missing required key: policy")
    seeds = _seeds_from(raw, cli_seed)
    cfg_hash = config_hash(raw)
    log_events = bool((raw.get("run") or {}).get("event_log", False))
    jobs = [{"scenario": scenario_to_dict(scenario), "policy": raw["policy"], "seed": s,
             "oracle_rate": raw["policy"].get("oracle_rate", True), "config_hash": cfg_hash,
             "event_log_path": (os.path.join(out_dir, f"events_seed{s}.csv")
                                if log_events else None)}
            for s in seeds]
    rows = run_plan(jobs, workers)
    out = os.path.join(out_dir, "results.csv")
    write_csv(out, result_columns(scenario.n_types), rows)
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg_hash, seeds)
    return out


# -- threshold frontier ----------------------------------------------------------

def frontier_jobs(raw: dict, cfg_hash: str) -> tuple[list[dict], list[tuple]]:
    front = raw.get("frontier")
    if front is None:
        raise ConfigError("missing required key: frontier")
    kind = front.get("policy", "threshold_resource")
    taus = front.get("taus")
    if not taus:
        raise ConfigError("missing required key: frontier.taus")
    points = front.get("mean_interarrivals")
    if not points:
        raise ConfigError("missing required key: frontier.mean_interarrivals")
    seeds = front.get("seeds", [1, 2, 3, 4, 5])
    jobs, coords = [], []
    for mit in points:
        for tau in taus:
            for seed in seeds:
                sc_raw = json.loads(json.dumps(raw))  # deep copy
                sc_raw.setdefault("arrivals", {})["mean_interarrival"] = mit
                sc_dict = scenario_to_dict(scenario_from_dict(sc_raw))
                pspec = ({"kind": "threshold_resource", "tau_fraction": tau}
                         if kind == "threshold_resource" else {"kind": "threshold_ue", "tau_ue": tau})
                jobs.append({"scenario": sc_dict, "policy": pspec, "seed": seed,
                             "config_hash": cfg_hash})
                coords.append((mit, tau, seed))
    return jobs, coords


def cmd_frontier(raw: dict, out_dir: str, workers: int = 1) -> str:
    """Sweep threshold values per load point; flag the best threshold per point."""
    cfg_hash = config_hash(raw)
    jobs, coords = frontier_jobs(raw, cfg_hash)
    rows = run_plan(jobs, workers)
    n_types = scenario_from_dict(jobs[0]["scenario"]).n_types

    run_rows = []
    for (mit, tau, seed), row in zip(coords, rows):
        row = dict(row)
        row["tau"] = tau
        run_rows.append(row)
    write_csv(os.path.join(out_dir, "frontier_runs.csv"),
              result_columns(n_types) + ["tau"], run_rows)

    agg_rows = []
    points = sorted({c[0] for c in coords})
    taus = sorted({c[1] for c in coords})
    for mit in points:
        best_tau, best_mean = None, -np.inf
        means = {}
        for tau in taus:
            vals = [r["discounted_reward"] for (m, tt, _), r in zip(coords, rows)
                    if m == mit and tt == tau]
            means[tau] = float(np.mean(vals))
            if means[tau] > best_mean:
                best_tau, best_mean = tau, means[tau]
        for tau in taus:
            agg_rows.append({"mean_interarrival": mit, "tau": tau,
                             "mean_discounted_reward": means[tau],
                             "frontier": 1 if tau == best_tau else 0,
                             "config_hash": cfg_hash})
    out = os.path.join(out_dir, "frontier.csv")
    write_csv(out, ["mean_interarrival", "tau", "mean_discounted_reward", "frontier",
                    "config_hash"], agg_rows)
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg_hash,
                   sorted({c[2] for c in coords}))
    return out


# -- training ---------------------------------------------------------------------

def _rate_binning(raw: dict, grid: list[float]) -> dict:
    mode = (raw.get("arrivals") or {}).get("mode", "homogeneous")
    per_cell = [1.0 / (N_CELLS * m) for m in grid]
    if mode == "time_varying":
        return {"rate_range": (0.5 * min(per_cell), 1.5 * max(per_cell))}
    return {"rate_values": tuple(per_cell)}


def cmd_train(raw: dict, out_dir: str, cli_seed: int | None = None) -> str:
    """Train a QL or DQL policy over a stream of scenario segments.

    Each segment draws its mean interarrival time from the evaluation grid so
    the arrival-rate feature generalizes across loads.
    """
    train = raw.get("train")
    if train is None:
        raise ConfigError("missing required key: train")
    kind = train.get("policy")
    if kind not in ("ql", "dql"):
        raise ConfigError("train.policy must be 'ql' or 'dql'")
    scenario = scenario_from_dict(raw)
    seed = cli_seed if cli_seed is not None else int(train.get("seed", 1))
    total = int(train.get("n_requests", 100_000))
    segment = int(train.get("segment_requests", 5_000))
    grid = list(train.get("mean_interarrival_grid", [scenario.arrivals.mean_interarrival]))
    feature_version = int(train.get("feature_version", 2))
    eps = rl.EpsilonSchedule(
        start=float(train.get("epsilon_start", 1.0)),
        final=float(train.get("epsilon_final", 0.05)),
        decay_fraction=float(train.get("epsilon_decay_fraction", 0.5)),
        total_decisions=total,
    )
    policy_rng = np.random.default_rng([seed, 100])
    if kind == "ql":
        quant = rl.build_quantizer(feature_version, scenario.n_types,
                                   **_rate_binning(raw, grid))
        policy = rl.QLPolicy(quant, scenario.rewards, feature_version=feature_version,
                             alpha=float(train.get("alpha", 0.1)), epsilon=eps,
                             rng=policy_rng, training=True)
    else:
        hidden = list(train.get("hidden_sizes", [64, 64]))
        sizes = [feature_length(feature_version, scenario.n_types)] + hidden + [2]
        net = mlp.MLP.create(sizes, np.random.default_rng([seed, 101]))
        policy = rl.DQLPolicy(net, scenario.rewards, feature_version=feature_version,
                              learning_rate=float(train.get("learning_rate", 1e-4)),
                              target_copy_period=int(train.get("target_copy_period", 500)),
                              reward_scale=float(train.get("reward_scale", 1.0)),
                              reward_baseline=bool(train.get("reward_baseline", False)),
                              epsilon=eps, rng=policy_rng, training=True)

    stream_rng = np.random.default_rng([seed, 102])
    done = 0
    segment_index = 0
    while done < total:
        n = min(segment, total - done)
        mit = float(grid[stream_rng.integers(0, len(grid))])
        seg_raw = scenario_to_dict(scenario)
        seg_raw["arrivals"]["mean_interarrival"] = mit
        seg_scenario = scenario_from_dict(seg_raw)
        sim = simcore.Simulation(seg_scenario, policy, (seed, segment_index))
        sim.run(n)
        done += n
        segment_index += 1

    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, train.get("checkpoint", f"{kind}_checkpoint.json"))
    rl.save_checkpoint(ckpt, policy, meta={
        "trained_requests": total, "seed": seed, "feature_version": feature_version,
        "mean_interarrival_grid": grid, "config_hash": config_hash(raw)})
    cfg_hash = config_hash(raw)
    log_path = os.path.join(out_dir, "training_log.csv")
    write_csv(log_path,
              ["update_index", "loss", "epsilon", "running_discounted_reward", "config_hash"],
              [{"update_index": u, "loss": l, "epsilon": e, "running_discounted_reward": r,
                "config_hash": cfg_hash}
               for u, l, e, r in policy.update_log])
    write_manifest(os.path.join(out_dir, "train_manifest.json"), config_hash(raw), [seed],
                   {"checkpoint": ckpt, "updates": policy.updates})
    return ckpt


def cmd_eval(raw: dict, checkpoint: str, out_dir: str, cli_seed: int | None = None,
             workers: int = 1) -> str:
    """Evaluate a trained checkpoint greedily over the configured seeds."""
    scenario = scenario_from_dict(raw)
    seeds = _seeds_from(raw, cli_seed)
    cfg_hash = config_hash(raw)
    kind = rl.load_checkpoint(checkpoint).name
    jobs = [{"scenario": scenario_to_dict(scenario),
             "policy": {"kind": kind, "checkpoint": checkpoint},
             "seed": s, "config_hash": cfg_hash} for s in seeds]
    rows = run_plan(jobs, workers)
    out = os.path.join(out_dir, "eval_results.csv")
    write_csv(out, result_columns(scenario.n_types), rows)
    write_manifest(os.path.join(out_dir, "eval_manifest.json"), cfg_hash, seeds,
                   {"checkpoint": checkpoint})
    return out


# -- curves and traces ---------------------------------------------------------------

CURVE_KINDS = ("pathloss", "los_prob", "rate_cap", "trace")


def curve_rows(kind: str, scenario: Scenario | None = None, seed: int = 1,
               duration: float = 1500.0) -> tuple[list[str], list[dict]]:
    """Dense sampled curves for external plotting."""
    if kind == "pathloss":
        fc, hut = 2.0, 1.5
        if scenario is not None:
            fc, hut = scenario.channel.carrier_ghz, scenario.channel.ue_height
        cols = ["d3d", "pathloss_los_db", "pathloss_nlos_db"]
        rows = [{"d3d": float(d),
                 "pathloss_los_db": float(channel.pathloss_los_db(d, fc)),
                 "pathloss_nlos_db": float(channel.pathloss_nlos_db(d, fc, hut))}
                for d in np.linspace(10.0, 2000.0, 400)]
        return cols, rows
    if kind == "los_prob":
        cols = ["d2d_out", "p_los"]
        rows = [{"d2d_out": float(d), "p_los": float(channel.los_probability(d))}
                for d in np.linspace(0.0, 500.0, 501)]
        return cols, rows
    if kind == "rate_cap":
        params = scenario.radio if scenario is not None else radio.RadioParams()
        cols = ["sinr_db", "rate"]
        rows = [{"sinr_db": float(s),
                 "rate": float(radio.channel_rate(10.0 ** (s / 10.0), params))}
                for s in np.linspace(-20.0, 40.0, 601)]
        return cols, rows
    if kind == "trace":
        if scenario is None:
            raise ConfigError("trace curves need a scenario config")
        return trace_rows(scenario, seed, duration)
    raise ConfigError(f"unknown curve kind {kind!r}; choose from {CURVE_KINDS}")


def trace_rows(scenario: Scenario, seed: int, duration: float) -> tuple[list[str], list[dict]]:
    """Two UEs from the center of cell 1 moving right at unit speed, sampled per second."""
    net = simcore.Network(scenario, seed)
    start = scenario.layout.centers[1]
    traj = Trajectory(origin=(float(start[0]), float(start[1])), direction=(1.0, 0.0),
                      speed=1.0)
    for ue in (0, 1):
        slot = net.create_ue(ue, 0, 1, 0.0, fixed_trajectory=traj)
        net.attach(slot, 0.0)
    cols = ["ue", "t", "x", "y", "serving_bs", "pathloss_db", "shadow_db", "rate",
            "resource_fraction"]
    rows = []
    for t in range(int(duration) + 1):
        net.sweep(float(t))
        for ue in (0, 1):
            i = net.id2slot[ue]
            j = int(net.serving[i])
            rows.append({"ue": ue, "t": float(t),
                         "x": float(net.pos[i, 0]), "y": float(net.pos[i, 1]),
                         "serving_bs": j,
                         "pathloss_db": float(net.pl_db[i, j]),
                         "shadow_db": float(net.shadow[i, j]),
                         "rate": float(net.rate[i]),
                         "resource_fraction": float(net.bi[i])})
    return cols, rows


def cmd_curves(kind: str, out_dir: str, raw: dict | None = None, seed: int = 1) -> str:
    scenario = scenario_from_dict(raw) if raw else None
    cols, rows = curve_rows(kind, scenario, seed)
    cfg_hash = config_hash(raw if raw else {"curves": kind})
    for row in rows:
        row["config_hash"] = cfg_hash
    out = os.path.join(out_dir, f"curves_{kind}.csv")
    write_csv(out, cols + ["config_hash"], rows)
    return out
