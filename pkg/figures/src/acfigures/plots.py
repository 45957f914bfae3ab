"""Render the simulator's CSV outputs as figures.

Pure consumers of the documented CSV schemas: no simulation logic, no
mutation of inputs, deterministic output for identical inputs.
"""

from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class SchemaError(ValueError):
    pass


def read_csv(path: str) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty CSV, nothing to plot")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: header only, no data rows")
    return list(reader.fieldnames), rows


def require_columns(columns: list[str], needed: list[str], path: str) -> None:
    missing = [c for c in needed if c not in columns]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing}; found {columns}")


def _save(fig, out_path: str) -> str:
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_frontier(in_path: str, out_path: str) -> str:
    """Discounted reward vs mean interarrival time, one line per threshold value."""
    cols, rows = read_csv(in_path)
    require_columns(cols, ["mean_interarrival", "tau", "mean_discounted_reward", "frontier"],
                    in_path)
    by_tau = defaultdict(list)
    for r in rows:
        by_tau[float(r["tau"])].append((float(r["mean_interarrival"]),
                                        float(r["mean_discounted_reward"]),
                                        int(r["frontier"])))
    fig, ax = plt.subplots(figsize=(7, 5))
    for tau in sorted(by_tau):
        pts = sorted(by_tau[tau])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", markersize=3,
                linewidth=1, alpha=0.7, label=f"tau/B = {tau:g}")
    front = sorted((float(r["mean_interarrival"]), float(r["mean_discounted_reward"]))
                   for r in rows if int(r["frontier"]) == 1)
    ax.plot([p[0] for p in front], [p[1] for p in front], color="black", linewidth=2.5,
            marker="s", label="frontier")
    ax.set_xlabel("mean interarrival time (s)")
    ax.set_ylabel("discounted reward per 10^3 requests")
    ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    return _save(fig, out_path)


def plot_policies(in_path: str, out_path: str) -> str:
    """Discounted reward vs mean interarrival time, one line per policy (mean over seeds)."""
    cols, rows = read_csv(in_path)
    require_columns(cols, ["policy", "mean_interarrival", "discounted_reward"], in_path)
    grouped = defaultdict(lambda: defaultdict(list))
    for r in rows:
        grouped[r["policy"]][float(r["mean_interarrival"])].append(
            float(r["discounted_reward"]))
    fig, ax = plt.subplots(figsize=(7, 5))
    for policy in sorted(grouped):
        xs = sorted(grouped[policy])
        means = np.array([np.mean(grouped[policy][x]) for x in xs])
        stds = np.array([np.std(grouped[policy][x]) for x in xs])
        ax.plot(xs, means, marker="o", label=policy)
        ax.fill_between(xs, means - stds, means + stds, alpha=0.15)
    ax.set_xlabel("mean interarrival time (s)")
    ax.set_ylabel("discounted reward per 10^3 requests")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, out_path)


def plot_pathloss(in_path: str, out_path: str) -> str:
    """LOS and NLOS pathloss vs 3D distance."""
    cols, rows = read_csv(in_path)
    require_columns(cols, ["d3d", "pathloss_los_db", "pathloss_nlos_db"], in_path)
    d = [float(r["d3d"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(d, [float(r["pathloss_los_db"]) for r in rows], label="LOS")
    ax.plot(d, [float(r["pathloss_nlos_db"]) for r in rows], label="NLOS")
    ax.set_xlabel("3D distance (m)")
    ax.set_ylabel("pathloss (dB)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, out_path)


def _trace_by_ue(in_path: str):
    cols, rows = read_csv(in_path)
    require_columns(cols, ["ue", "t", "pathloss_db", "shadow_db", "rate",
                           "resource_fraction"], in_path)
    by_ue = defaultdict(list)
    for r in rows:
        by_ue[r["ue"]].append(r)
    return by_ue


def plot_trace(in_path: str, out_path: str) -> str:
    """Signal strength and occupied resources along the two-UE reference walk."""
    by_ue = _trace_by_ue(in_path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 5))
    for ue in sorted(by_ue):
        rows = by_ue[ue]
        t = [float(r["t"]) for r in rows]
        strength = [float(r["pathloss_db"]) + float(r["shadow_db"]) for r in rows]
        ax1.plot(t, strength, linewidth=0.8, label=f"UE {ue}")
        ax2.plot(t, [float(r["resource_fraction"]) for r in rows], linewidth=0.8,
                 label=f"UE {ue}")
    ax1.set_xlabel("time (s)")
    ax1.set_ylabel("pathloss + shadowing (dB)")
    ax1.legend()
    ax1.grid(alpha=0.3)
    ax2.set_xlabel("time (s)")
    ax2.set_ylabel("occupied resource fraction")
    ax2.legend()
    ax2.grid(alpha=0.3)
    return _save(fig, out_path)


def plot_rate(in_path: str, out_path: str) -> str:
    """Channel rate along the two-UE reference walk."""
    by_ue = _trace_by_ue(in_path)
    fig, ax = plt.subplots(figsize=(7, 5))
    for ue in sorted(by_ue):
        rows = by_ue[ue]
        ax.plot([float(r["t"]) for r in rows], [float(r["rate"]) for r in rows],
                linewidth=0.8, label=f"UE {ue}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("channel rate (b/s/Hz)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, out_path)


PLOTTERS = {
    "frontier": plot_frontier,
    "policies": plot_policies,
    "pathloss": plot_pathloss,
    "trace": plot_trace,
    "rate": plot_rate,
}


def plot(kind: str, in_path: str, out_path: str) -> str:
    if kind not in PLOTTERS:
        raise SchemaError(f"unknown figure kind {kind!r}; choose from {sorted(PLOTTERS)}")
    return PLOTTERS[kind](in_path, out_path)
