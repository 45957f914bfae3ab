"""SINR, capped channel rate, resource demand and serving-cell selection.

The received, noise and interference powers all carry the UE's allocated
fraction B_i as a common factor, so the SINR is invariant to B_i; the scalar
`sinr` keeps the literal formula for auditability while the vectorized helpers
used by the event engine work with the cancelled form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RadioParams:
    tx_power_dbm: float = 46.0
    noise_density_dbm_hz: float = -174.0
    bandwidth_hz: float = 1.0e7
    rate_floor: float = 0.32
    rate_cap: float = 7.6
    handover_margin_db: float = 3.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if not self.rate_floor < self.rate_cap:
            raise ValueError("rate_floor must be below rate_cap")

    @property
    def tx_power_mw(self) -> float:
        return 10.0 ** (self.tx_power_dbm / 10.0)

    @property
    def noise_power_mw(self) -> float:
        """Full-band thermal noise N0 * B in mW."""
        return 10.0 ** (self.noise_density_dbm_hz / 10.0) * self.bandwidth_hz


def sinr(gains: np.ndarray, serving: int, cell_loads: np.ndarray, params: RadioParams,
         resource_fraction: float = 1.0) -> float:
    """Literal SINR for one UE: P_R / (P_N + P_I).

    gains: linear link gain toward each of the 7 base stations.
    P_R = Pt * B_i * g_serving, P_N = N0 * B * B_i,
    P_I = sum over other cells of Pt * B_i * g_j * B^j.
    """
    gains = np.asarray(gains, dtype=float)
    if resource_fraction <= 0:
        raise ValueError("resource fraction must be positive")
    pt = params.tx_power_mw
    p_r = pt * resource_fraction * gains[serving]
    p_n = params.noise_power_mw * resource_fraction
    mask = np.ones(gains.shape[-1], dtype=bool)
    mask[serving] = False
    p_i = resource_fraction * np.sum(pt * gains[mask] * np.asarray(cell_loads, dtype=float)[mask])
    return float(p_r / (p_n + p_i))


def sinr_all(gains: np.ndarray, serving: np.ndarray, cell_loads: np.ndarray,
             params: RadioParams) -> np.ndarray:
    """Vectorized SINR for N UEs with gains (N, 7) and serving indices (N,)."""
    pt = params.tx_power_mw
    n = gains.shape[0]
    g_serv = gains.ravel()[np.arange(n) * gains.shape[1] + serving]
    total_i = pt * (gains @ np.asarray(cell_loads, dtype=float))
    return pt * g_serv / (params.noise_power_mw + total_i - pt * g_serv * cell_loads[serving])


def channel_rate(sinr_linear, params: RadioParams):
    """Spectral efficiency log2(1 + SINR), capped to [rate_floor, rate_cap]."""
    s = np.asarray(sinr_linear, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR must be nonnegative")
    return np.clip(np.log2(1.0 + s), params.rate_floor, params.rate_cap)


def resource_demand(rate, throughput_bps, params: RadioParams):
    """Fraction of the cell bandwidth needed to sustain the throughput requirement."""
    r = np.asarray(rate, dtype=float)
    if np.any(r < params.rate_floor - 1e-12) or np.any(r > params.rate_cap + 1e-12):
        raise ValueError("rate outside the configured caps")
    return throughput_bps / (r * params.bandwidth_hz)


def select_serving_cell(signal_db: np.ndarray, current: int | None,
                        margin_db: float) -> int:
    """Handover rule: switch only if the best cell beats the current one by > margin.

    signal_db is the combined signal strength (-(pathloss + shadowing)) toward
    each base station. With no current cell the plain argmax wins.
    """
    signal_db = np.asarray(signal_db, dtype=float)
    best = int(np.argmax(signal_db))
    if current is None:
        return best
    if signal_db[best] > signal_db[current] + margin_db:
        return best
    return int(current)


def handover_all(signal_db: np.ndarray, serving: np.ndarray, margin_db: float) -> np.ndarray:
    """Vectorized handover for N UEs with signal (N, 7) and serving (N,)."""
    n, m = signal_db.shape
    flat = signal_db.ravel()
    best = np.argmax(signal_db, axis=1)
    cur_sig = flat[np.arange(n) * m + serving]
    best_sig = flat[np.arange(n) * m + best]
    switch = best_sig > cur_sig + margin_db
    return np.where(switch, best, serving)
