"""Large-scale channel state per (UE, BS) link.

Covers the urban-macro style pathloss formulas, the distance-driven LOS/NLOS
re-draw with linear interpolation in dB, and spatially correlated log-normal
shadowing realized as a Gauss-Markov process with autocorrelation
exp(-dx / d_cor). Fast fading and antenna patterns are out of scope.

All formula functions are elementwise on numpy arrays so the simulation core
can evaluate whole (UE, BS) blocks at once; the stateful per-link classes wrap
the same formulas for single-link use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import CellLayout, wrapped_distance_2d


@dataclass(frozen=True)
class ChannelParams:
    carrier_ghz: float = 2.0
    shadow_sigma_db: float = 4.0
    correlation_distance: float = 37.0
    ue_height: float = 1.5

    def __post_init__(self):
        for name in ("carrier_ghz", "shadow_sigma_db", "correlation_distance", "ue_height"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def pathloss_los_db(d3d, fc_ghz):
    """Line-of-sight pathloss: 22 log10(d3d) + 28 + 20 log10(fc)."""
    d3d = np.asarray(d3d, dtype=float)
    if np.any(d3d <= 0) or fc_ghz <= 0:
        raise ValueError("d3d and fc must be strictly positive")
    return 22.0 * np.log10(d3d) + 28.0 + 20.0 * np.log10(fc_ghz)


def pathloss_nlos_db(d3d, fc_ghz, h_ut):
    """Non-line-of-sight pathloss: 13.54 + 39.88 log10(d3d) + 20 log10(fc) - 0.6 (h_ut - 1.5)."""
    d3d = np.asarray(d3d, dtype=float)
    if np.any(d3d <= 0) or fc_ghz <= 0:
        raise ValueError("d3d and fc must be strictly positive")
    return 13.54 + 39.88 * np.log10(d3d) + 20.0 * np.log10(fc_ghz) - 0.6 * (h_ut - 1.5)


def los_probability(d2d_out):
    """Probability that a link is line-of-sight at planar distance d2d_out."""
    d = np.asarray(d2d_out, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(d > 0, 18.0 / np.maximum(d, 1e-300), 1.0)
        p = frac + (1.0 - frac) * np.exp(-d / 63.0)
    return np.where(d <= 18.0, 1.0, p)


def blend_pathloss_db(near_is_los, far_is_los, frac, d3d, fc_ghz, h_ut):
    """Pathloss between two LOS re-draw anchors: linear-in-dB interpolation.

    Both endpoint values are evaluated at the *current* d3d with the anchor's
    own LOS/NLOS formula, then mixed with weight `frac` (distance into the
    current correlation segment, in [0, 1)).
    """
    log_d = np.log10(np.asarray(d3d, dtype=float))
    log_f = 20.0 * np.log10(fc_ghz)
    pl_los = 22.0 * log_d + 28.0 + log_f
    pl_nlos = 13.54 + 39.88 * log_d + log_f - 0.6 * (h_ut - 1.5)
    near = np.where(near_is_los, pl_los, pl_nlos)
    far = np.where(far_is_los, pl_los, pl_nlos)
    return (1.0 - frac) * near + frac * far


def shadowing_step(value_db, dx, d_cor, sigma_db, z):
    """One Gauss-Markov update: rho*old + sqrt(1-rho^2)*sigma*z with rho = exp(-dx/d_cor)."""
    rho = np.exp(-np.asarray(dx, dtype=float) / d_cor)
    return rho * value_db + np.sqrt(1.0 - rho * rho) * sigma_db * z


def link_gain_linear(pathloss_db, shadow_db):
    """Linear power gain 1/(PL*X): 10^(-(pathloss + shadowing)/10)."""
    return 10.0 ** (-(np.asarray(pathloss_db, dtype=float) + shadow_db) / 10.0)


@dataclass
class LosSegmentState:
    """LOS/NLOS anchors for one (UE, BS) link, spaced d_cor meters of travel apart."""

    anchor_is_los: bool
    next_anchor_is_los: bool
    next_anchor_travelled: float

    @classmethod
    def fresh(cls, d2d_out: float, params: ChannelParams, rng) -> "LosSegmentState":
        p = float(los_probability(d2d_out))
        return cls(
            anchor_is_los=bool(rng.random() < p),
            next_anchor_is_los=bool(rng.random() < p),
            next_anchor_travelled=params.correlation_distance,
        )


def advance_los_state(
    state: LosSegmentState,
    travelled: float,
    d3d: float,
    d2d_out: float,
    params: ChannelParams,
    rng,
) -> tuple[LosSegmentState, float]:
    """Advance the anchor pair to `travelled` meters and return the interpolated pathloss.

    Crossing an anchor promotes the far anchor and re-draws a new far LOS flag
    with the LOS probability at the current position.
    """
    d_cor = params.correlation_distance
    while travelled >= state.next_anchor_travelled:
        state = LosSegmentState(
            anchor_is_los=state.next_anchor_is_los,
            next_anchor_is_los=bool(rng.random() < float(los_probability(d2d_out))),
            next_anchor_travelled=state.next_anchor_travelled + d_cor,
        )
    frac = 1.0 - (state.next_anchor_travelled - travelled) / d_cor
    pl = blend_pathloss_db(
        state.anchor_is_los, state.next_anchor_is_los, frac, d3d, params.carrier_ghz, params.ue_height
    )
    return state, float(pl)


@dataclass
class ShadowingState:
    """Correlated shadowing for one (UE, BS) link."""

    last_value_db: float
    last_position: np.ndarray

    @classmethod
    def fresh(cls, position, params: ChannelParams, rng) -> "ShadowingState":
        return cls(
            last_value_db=float(rng.standard_normal() * params.shadow_sigma_db),
            last_position=np.asarray(position, dtype=float).copy(),
        )


def update_shadowing(
    state: ShadowingState,
    new_pos,
    params: ChannelParams,
    rng,
    layout: CellLayout | None = None,
) -> tuple[ShadowingState, float]:
    """Gauss-Markov step driven by the (wrapped) displacement since the last update."""
    if layout is not None:
        dx = float(wrapped_distance_2d(new_pos, state.last_position, layout))
    else:
        dx = float(np.hypot(*(np.asarray(new_pos, dtype=float) - state.last_position)))
    if dx > 0.0:
        value = float(
            shadowing_step(state.last_value_db, dx, params.correlation_distance,
                           params.shadow_sigma_db, rng.standard_normal())
        )
    else:
        value = state.last_value_db
    state = ShadowingState(last_value_db=value, last_position=np.asarray(new_pos, dtype=float).copy())
    return state, value
