"""Scenario configuration: schema, defaults, validation and hashing.

A scenario file is YAML with sections {layout, channel, radio, arrivals,
rewards, policy, run}. Everything physical defaults to the standard parameter
set (ISD 400 m, fc 2 GHz, 46 dBm, 10 MHz, ...); arrival and reward settings
must be given. The config hash pins the resolved scenario for reproducibility
manifests and result rows.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import yaml

from .channel import ChannelParams
from .geom import CellLayout, N_CELLS
from .radio import RadioParams

ARRIVAL_MODES = ("homogeneous", "heterogeneous", "time_varying")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RewardSchedule:
    """Per-type event rewards and the per-second discount base."""

    accept: tuple[float, ...]
    block: tuple[float, ...]
    drop: tuple[float, ...]
    gamma: float = 0.999

    def __post_init__(self):
        if not len(self.accept) == len(self.block) == len(self.drop):
            raise ConfigError("rewards.accept/block/drop must have one entry per UE type")
        if any(r < 0 for r in self.accept):
            raise ConfigError("accept rewards must be nonnegative")
        if any(r > 0 for r in self.drop):
            raise ConfigError("drop rewards must be nonpositive")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")

    @property
    def n_types(self) -> int:
        return len(self.accept)


@dataclass(frozen=True)
class ArrivalSpec:
    """Poisson connection requests; rates are per cell.

    mean_interarrival is the system-wide mean time between requests, so the
    mean per-cell rate is 1 / (7 * mean_interarrival). Heterogeneous modes
    draw per-cell rates uniformly from [0.5, 1.5] times that mean, once at
    t = 0 or afresh every t_var seconds.
    """

    mode: str = "homogeneous"
    mean_interarrival: float = 2.0
    t_var: float = 1000.0
    type_mix: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.mode not in ARRIVAL_MODES:
            raise ConfigError(f"arrivals.mode must be one of {ARRIVAL_MODES}, got {self.mode!r}")
        if self.mean_interarrival <= 0:
            raise ConfigError("arrivals.mean_interarrival must be positive")
        if self.mode == "time_varying" and self.t_var <= 0:
            raise ConfigError("arrivals.t_var must be positive")
        if abs(sum(self.type_mix) - 1.0) > 1e-9 or any(p < 0 for p in self.type_mix):
            raise ConfigError("arrivals.type_mix must be nonnegative and sum to 1")

    @property
    def mean_cell_rate(self) -> float:
        return 1.0 / (N_CELLS * self.mean_interarrival)


@dataclass(frozen=True)
class RunSpec:
    n_requests: int = 10_000
    sweep_iterations: int = 1
    tick_interval: float = 1.0
    mean_holding_time: float = 200.0

    def __post_init__(self):
        if self.n_requests < 1:
            raise ConfigError("run.n_requests must be at least 1")
        if self.sweep_iterations < 1:
            raise ConfigError("run.sweep_iterations must be at least 1")
        if self.tick_interval <= 0 or self.mean_holding_time <= 0:
            raise ConfigError("run.tick_interval and run.mean_holding_time must be positive")


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    layout: CellLayout
    channel: ChannelParams
    radio: RadioParams
    throughput_bps: tuple[float, ...]
    arrivals: ArrivalSpec
    rewards: RewardSchedule
    run: RunSpec = field(default_factory=RunSpec)

    def __post_init__(self):
        k = self.rewards.n_types
        if len(self.throughput_bps) != k:
            raise ConfigError("radio.throughput_bps must have one entry per UE type")
        if len(self.arrivals.type_mix) != k:
            raise ConfigError("arrivals.type_mix must have one entry per UE type")

    @property
    def n_types(self) -> int:
        return self.rewards.n_types


def _get(section: dict, key: str, path: str, required: bool = False, default: Any = None):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key: {path}.{key}")
        return default
    return section[key]


def scenario_from_dict(raw: dict) -> Scenario:
    """Build a validated scenario from a parsed config dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    lay = raw.get("layout", {}) or {}
    chan = raw.get("channel", {}) or {}
    rad = raw.get("radio", {}) or {}
    arr = raw.get("arrivals")
    rew = raw.get("rewards")
    run = raw.get("run", {}) or {}
    if arr is None:
        raise ConfigError("missing required key: arrivals")
    if rew is None:
        raise ConfigError("missing required key: rewards")

    layout = CellLayout(
        inter_site_distance=float(_get(lay, "inter_site_distance", "layout", default=400.0)),
        bs_height=float(_get(lay, "bs_height", "layout", default=25.0)),
    )
    channel = ChannelParams(
        carrier_ghz=float(_get(chan, "carrier_ghz", "channel", default=2.0)),
        shadow_sigma_db=float(_get(chan, "shadow_sigma_db", "channel", default=4.0)),
        correlation_distance=float(_get(chan, "correlation_distance", "channel", default=37.0)),
        ue_height=float(_get(chan, "ue_height", "channel", default=1.5)),
    )
    radio = RadioParams(
        tx_power_dbm=float(_get(rad, "tx_power_dbm", "radio", default=46.0)),
        noise_density_dbm_hz=float(_get(rad, "noise_density_dbm_hz", "radio", default=-174.0)),
        bandwidth_hz=float(_get(rad, "bandwidth_hz", "radio", default=1.0e7)),
        rate_floor=float(_get(rad, "rate_floor", "radio", default=0.32)),
        rate_cap=float(_get(rad, "rate_cap", "radio", default=7.6)),
        handover_margin_db=float(_get(rad, "handover_margin_db", "radio", default=3.0)),
    )
    accept = _get(rew, "accept", "rewards", required=True)
    block = _get(rew, "block", "rewards", required=True)
    drop = _get(rew, "drop", "rewards", required=True)
    rewards = RewardSchedule(
        accept=tuple(float(x) for x in accept),
        block=tuple(float(x) for x in block),
        drop=tuple(float(x) for x in drop),
        gamma=float(_get(rew, "gamma", "rewards", default=0.999)),
    )
    n_types = rewards.n_types
    throughput = _get(rad, "throughput_bps", "radio", default=[1.0e6] * n_types)
    if isinstance(throughput, (int, float)):
        throughput = [throughput] * n_types
    arrivals = ArrivalSpec(
        mode=_get(arr, "mode", "arrivals", default="homogeneous"),
        mean_interarrival=float(_get(arr, "mean_interarrival", "arrivals", required=True)),
        t_var=float(_get(arr, "t_var", "arrivals", default=1000.0)),
        type_mix=tuple(float(x) for x in _get(arr, "type_mix", "arrivals",
                                              default=[1.0 / n_types] * n_types)),
    )
    runspec = RunSpec(
        n_requests=int(_get(run, "n_requests", "run", default=10_000)),
        sweep_iterations=int(_get(run, "sweep_iterations", "run", default=1)),
        tick_interval=float(_get(run, "tick_interval", "run", default=1.0)),
        mean_holding_time=float(_get(run, "mean_holding_time", "run", default=200.0)),
    )
    return Scenario(
        scenario_id=str(raw.get("scenario_id", "scenario")),
        layout=layout,
        channel=channel,
        radio=radio,
        throughput_bps=tuple(float(x) for x in throughput),
        arrivals=arrivals,
        rewards=rewards,
        run=runspec,
    )


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "scenario_id": s.scenario_id,
        "layout": {"inter_site_distance": s.layout.inter_site_distance,
                   "bs_height": s.layout.bs_height},
        "channel": {"carrier_ghz": s.channel.carrier_ghz,
                    "shadow_sigma_db": s.channel.shadow_sigma_db,
                    "correlation_distance": s.channel.correlation_distance,
                    "ue_height": s.channel.ue_height},
        "radio": {"tx_power_dbm": s.radio.tx_power_dbm,
                  "noise_density_dbm_hz": s.radio.noise_density_dbm_hz,
                  "bandwidth_hz": s.radio.bandwidth_hz,
                  "rate_floor": s.radio.rate_floor,
                  "rate_cap": s.radio.rate_cap,
                  "handover_margin_db": s.radio.handover_margin_db,
                  "throughput_bps": list(s.throughput_bps)},
        "arrivals": {"mode": s.arrivals.mode,
                     "mean_interarrival": s.arrivals.mean_interarrival,
                     "t_var": s.arrivals.t_var,
                     "type_mix": list(s.arrivals.type_mix)},
        "rewards": {"accept": list(s.rewards.accept), "block": list(s.rewards.block),
                    "drop": list(s.rewards.drop), "gamma": s.rewards.gamma},
        "run": {"n_requests": s.run.n_requests, "sweep_iterations": s.run.sweep_iterations,
                "tick_interval": s.run.tick_interval,
                "mean_holding_time": s.run.mean_holding_time},
    }


def load_config(path: str) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError(f"config file {path} is empty")
    return raw


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value overrides (values parsed as YAML scalars)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through non-mapping key {part!r}")
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def config_hash(raw: dict) -> str:
    """Stable hash of a resolved configuration."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
