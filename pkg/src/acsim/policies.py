"""Admission policies and state featurization.

A policy sees an immutable DecisionContext per connection request and answers
accept (True) or block (False). Stateful policies (the learners, the
clairvoyant bookkeeping) additionally receive lifecycle callbacks from the
event engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTION_BLOCK = 0
ACTION_ACCEPT = 1

FEATURE_VERSIONS = (1, 2, 3, 4)


@dataclass(frozen=True)
class DecisionContext:
    """Snapshot handed to a policy at one connection request."""

    ue_id: int
    ue_type: int
    n_types: int
    candidate_cell: int
    tentative_bi: float
    cell_loads: tuple[float, ...]
    cell_counts: tuple[int, ...]
    cell_mean_rate: float  # mean channel rate of UEs attached to the candidate cell
    arrival_rate: float    # current per-cell arrival rate at the candidate cell
    time: float


def featurize(version: int, ctx: DecisionContext) -> np.ndarray:
    """Feature vector for the RL policies.

    v1: candidate-cell load; v2 adds the arriving UE's resource demand;
    v3 adds the 6 neighbor-cell loads (cell-index order); v4 adds the mean
    channel rate of the UEs in the candidate cell. The arrival rate and the
    UE-type one-hot are always appended last.
    """
    if version not in FEATURE_VERSIONS:
        raise ValueError(f"unknown featurization version {version}")
    feats = [ctx.cell_loads[ctx.candidate_cell]]
    if version >= 2:
        feats.append(ctx.tentative_bi)
    if version >= 3:
        feats.extend(load for j, load in enumerate(ctx.cell_loads) if j != ctx.candidate_cell)
    if version >= 4:
        feats.append(ctx.cell_mean_rate)
    feats.append(ctx.arrival_rate)
    one_hot = [0.0] * ctx.n_types
    one_hot[ctx.ue_type] = 1.0
    feats.extend(one_hot)
    return np.array(feats, dtype=float)


def feature_length(version: int, n_types: int, n_cells: int = 7) -> int:
    base = {1: 1, 2: 2, 3: 2 + (n_cells - 1), 4: 3 + (n_cells - 1)}[version]
    return base + 1 + n_types


class AdmissionPolicy:
    """Base class: accept everything, ignore all callbacks."""

    name = "accept_all"
    clairvoyant = False
    training = False

    def decide(self, ctx: DecisionContext) -> bool:
        return True

    def notify_decision(self, ctx: DecisionContext, accepted: bool) -> None:
        pass

    def on_finish(self, ue_id: int, t: float) -> None:
        pass

    def on_drop(self, ue_id: int, t: float, accept_time: float) -> None:
        pass

    def finalize(self, t: float) -> None:
        pass

    def diagnostics(self) -> dict:
        return {}


class AcceptAll(AdmissionPolicy):
    name = "accept_all"


class BlockAll(AdmissionPolicy):
    name = "block_all"

    def decide(self, ctx: DecisionContext) -> bool:
        return False


class Clairvoyant(AdmissionPolicy):
    """No-dropping clairvoyant: accept everything, re-book drops as blocks.

    The retroactive accounting itself lives in the metrics; the engine keys it
    off the `clairvoyant` flag.
    """

    name = "clairvoyant"
    clairvoyant = True


def threshold_ue(ctx: DecisionContext, tau_u: int) -> bool:
    """Accept iff the candidate cell currently serves fewer than tau_u UEs."""
    if tau_u < 0 or int(tau_u) != tau_u:
        raise ValueError("tau_u must be a nonnegative integer")
    return ctx.cell_counts[ctx.candidate_cell] < tau_u


def threshold_resource(ctx: DecisionContext, tau_r_hz: float, bandwidth_hz: float) -> bool:
    """Accept iff occupied + requested resources stay within tau_r (in Hz)."""
    if not 0 <= tau_r_hz <= bandwidth_hz:
        raise ValueError("tau_r must lie in [0, bandwidth]")
    post_fraction = ctx.cell_loads[ctx.candidate_cell] + ctx.tentative_bi
    return post_fraction <= tau_r_hz / bandwidth_hz


class ThresholdUE(AdmissionPolicy):
    def __init__(self, tau_u: int):
        self.tau_u = int(tau_u)
        self.name = f"threshold_ue({self.tau_u})"
        self.overflow_observations = 0  # decisions seeing a cell above the threshold

    def decide(self, ctx: DecisionContext) -> bool:
        if max(ctx.cell_counts) > self.tau_u:
            self.overflow_observations += 1
        return threshold_ue(ctx, self.tau_u)

    def diagnostics(self) -> dict:
        return {"overflow_observations": self.overflow_observations}


class ThresholdResource(AdmissionPolicy):
    def __init__(self, tau_fraction: float, bandwidth_hz: float):
        if not 0.0 <= tau_fraction <= 1.0:
            raise ValueError("tau_fraction must lie in [0, 1]")
        self.tau_fraction = float(tau_fraction)
        self.bandwidth_hz = float(bandwidth_hz)
        self.name = f"threshold_resource({self.tau_fraction:g})"

    def decide(self, ctx: DecisionContext) -> bool:
        return threshold_resource(ctx, self.tau_fraction * self.bandwidth_hz, self.bandwidth_hz)
