"""Tabular Q-learning and deep Q-learning admission policies.

Both learners share the same transition bookkeeping: a decision opens a
pending transition (state, action, time); the *next* decision supplies its
successor state and the inter-decision gap; the reward resolves immediately
for blocks and at finish/drop for accepts, with the drop penalty credited to
the state in which the dropped UE was accepted. An update fires as soon as a
transition has both its successor state and its reward.

Updates use r + gamma^dt * max_a Q(s', a) as the target: tabular updates move
Q(s, a) by a step alpha toward it; the deep learner takes one Adam step on the
squared error of the taken action's predicted Q value, with the bootstrap
coming from a periodically copied target network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .config import RewardSchedule
from .policies import ACTION_ACCEPT, AdmissionPolicy, DecisionContext, featurize

CHECKPOINT_FORMAT = "acsim-checkpoint-v1"


# -- epsilon schedule -------------------------------------------------------

@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from start to final over the first decay_fraction of training."""

    start: float = 1.0
    final: float = 0.05
    decay_fraction: float = 0.5
    total_decisions: int = 0

    def value(self, decision_index: int) -> float:
        horizon = self.total_decisions * self.decay_fraction
        if horizon <= 0 or decision_index >= horizon:
            return self.final
        return self.start + (self.final - self.start) * decision_index / horizon


GREEDY = EpsilonSchedule(start=0.0, final=0.0, decay_fraction=0.0, total_decisions=0)


# -- state quantization ------------------------------------------------------

@dataclass(frozen=True)
class FeatureBins:
    kind: str  # "uniform" | "grid" | "identity"
    lo: float = 0.0
    hi: float = 1.0
    nbins: int = 10
    values: tuple[float, ...] = ()

    def index(self, x: float) -> int:
        if self.kind == "identity":
            return int(round(x))
        if self.kind == "grid":
            return int(np.argmin(np.abs(np.asarray(self.values) - x)))
        span = self.hi - self.lo
        i = int((x - self.lo) / span * self.nbins)
        return min(max(i, 0), self.nbins - 1)


@dataclass(frozen=True)
class Quantizer:
    bins: tuple[FeatureBins, ...]

    def __call__(self, features: np.ndarray) -> tuple[int, ...]:
        if len(features) != len(self.bins):
            raise ValueError(f"feature length {len(features)} != quantizer length {len(self.bins)}")
        return tuple(b.index(float(x)) for b, x in zip(self.bins, features))

    def to_dict(self) -> list[dict]:
        return [{"kind": b.kind, "lo": b.lo, "hi": b.hi, "nbins": b.nbins,
                 "values": list(b.values)} for b in self.bins]

    @classmethod
    def from_dict(cls, raw: list[dict]) -> "Quantizer":
        return cls(tuple(FeatureBins(kind=d["kind"], lo=d["lo"], hi=d["hi"],
                                     nbins=d["nbins"], values=tuple(d["values"]))
                         for d in raw))


LOAD_BINS = FeatureBins("uniform", lo=0.0, hi=1.5, nbins=10)
DEMAND_BINS = FeatureBins("uniform", lo=0.013, hi=0.3125, nbins=10)
QUALITY_BINS = FeatureBins("uniform", lo=0.0, hi=7.6, nbins=10)


def build_quantizer(version: int, n_types: int,
                    rate_values: tuple[float, ...] | None = None,
                    rate_range: tuple[float, float] | None = None) -> Quantizer:
    """Binning per featurization version; the arrival rate maps to its scenario grid."""
    bins: list[FeatureBins] = [LOAD_BINS]
    if version >= 2:
        bins.append(DEMAND_BINS)
    if version >= 3:
        bins.extend([LOAD_BINS] * 6)
    if version >= 4:
        bins.append(QUALITY_BINS)
    if rate_values:
        bins.append(FeatureBins("grid", values=tuple(float(v) for v in rate_values)))
    else:
        lo, hi = rate_range if rate_range else (0.0, 1.0)
        bins.append(FeatureBins("uniform", lo=lo, hi=hi, nbins=10))
    bins.extend([FeatureBins("identity")] * n_types)
    return Quantizer(tuple(bins))


# -- transition bookkeeping ---------------------------------------------------

@dataclass
class PendingTransition:
    index: int
    state: np.ndarray
    q_state: tuple | None
    action: int
    time: float
    next_state: np.ndarray | None = None
    next_q_state: tuple | None = None
    dt_next: float | None = None
    boot: float | None = None  # gamma^dt * max_a Q(s', a), cached when s' is observed
    reward: float | None = None

    @property
    def complete(self) -> bool:
        return self.reward is not None and self.next_state is not None


class TransitionTracker:
    """Links each decision to its successor and to the UE's eventual outcome.

    The discounted bootstrap for a transition is evaluated (via bootstrap_fn)
    the moment its successor state is observed, not when its reward resolves:
    block rewards resolve within one decision while accept rewards resolve a
    holding time later, and sampling the value network at such different ages
    would systematically favor whichever action resolves slower.
    """

    def __init__(self, schedule: RewardSchedule, bootstrap_fn=None):
        self.schedule = schedule
        self.bootstrap_fn = bootstrap_fn
        self._pending: dict[int, PendingTransition] = {}
        self._by_ue: dict[int, tuple[int, int]] = {}  # ue_id -> (transition index, ue type)
        self._last: PendingTransition | None = None
        self._count = 0

    def unresolved(self) -> int:
        return len(self._pending)

    def on_decision(self, ue_id: int, ue_type: int, state, q_state, action: int,
                    t: float, accepted: bool) -> list[PendingTransition]:
        done = []
        tr = PendingTransition(index=self._count, state=state, q_state=q_state,
                               action=action, time=t)
        self._count += 1
        prev = self._last
        if prev is not None:
            prev.next_state = state
            prev.next_q_state = q_state
            prev.dt_next = t - prev.time
            if self.bootstrap_fn is not None:
                prev.boot = self.bootstrap_fn(state, q_state, prev.dt_next)
            if prev.complete:
                done.append(prev)
                del self._pending[prev.index]
        self._pending[tr.index] = tr
        self._last = tr
        if accepted:
            self._by_ue[ue_id] = (tr.index, ue_type)
        else:
            tr.reward = self.schedule.block[ue_type]
        return done

    def _resolve(self, ue_id: int, reward_fn) -> list[PendingTransition]:
        entry = self._by_ue.pop(ue_id, None)
        if entry is None:
            return []
        idx, ue_type = entry
        tr = self._pending.get(idx)
        if tr is None:
            return []
        tr.reward = reward_fn(ue_type)
        if tr.complete:
            del self._pending[tr.index]
            return [tr]
        return []

    def on_finish(self, ue_id: int) -> list[PendingTransition]:
        return self._resolve(ue_id, lambda k: self.schedule.accept[k])

    def on_drop(self, ue_id: int, dt_drop: float) -> list[PendingTransition]:
        s = self.schedule
        return self._resolve(
            ue_id, lambda k: s.accept[k] + s.gamma**dt_drop * s.drop[k])

    def flush_terminal(self) -> list[PendingTransition]:
        """Resolve reward-complete transitions that never saw a successor (end of run)."""
        done = []
        for idx in sorted(self._pending):
            tr = self._pending[idx]
            if tr.reward is not None and tr.next_state is None:
                done.append(tr)
        for tr in done:
            del self._pending[tr.index]
        if self._last is not None and self._last.next_state is None:
            self._last = None
        return done


# -- tabular Q-learning -------------------------------------------------------

class QTable:
    """Lookup table over quantized states; unseen entries read as zero."""

    def __init__(self, alpha: float, gamma: float):
        self.alpha = alpha
        self.gamma = gamma
        self.q: dict[tuple, list[float]] = {}

    def values(self, state: tuple) -> list[float]:
        return self.q.get(state, [0.0, 0.0])

    def greedy_action(self, state: tuple) -> int:
        v = self.values(state)
        return ACTION_ACCEPT if v[ACTION_ACCEPT] >= v[1 - ACTION_ACCEPT] else 1 - ACTION_ACCEPT


def ql_update(table: QTable, tr: PendingTransition) -> float:
    """Bellman step toward r + gamma^dt * max_a Q(s', a); returns the new Q value."""
    if tr.reward is None:
        raise ValueError("transition has no resolved reward")
    if tr.boot is not None:
        boot = tr.boot
    elif tr.next_q_state is not None:
        if tr.dt_next is None:
            raise ValueError("transition has a successor state but no time gap")
        boot = table.gamma**tr.dt_next * max(table.values(tr.next_q_state))
    else:
        boot = 0.0  # end of run: no further decision to bootstrap from
    vals = list(table.values(tr.q_state))
    vals[tr.action] += table.alpha * (tr.reward + boot - vals[tr.action])
    table.q[tr.q_state] = vals
    return vals[tr.action]


class QLPolicy(AdmissionPolicy):
    """Epsilon-greedy tabular Q-learning over a quantized feature space."""

    name = "ql"

    def __init__(self, quantizer: Quantizer, schedule: RewardSchedule, *,
                 feature_version: int = 2, alpha: float = 0.1,
                 epsilon: EpsilonSchedule = GREEDY, rng=None, training: bool = False):
        self.quantizer = quantizer
        self.feature_version = feature_version
        self.table = QTable(alpha=alpha, gamma=schedule.gamma)
        self.schedule = schedule
        self.epsilon = epsilon
        self.rng = rng or np.random.default_rng(0)
        self.training = training
        self.tracker = TransitionTracker(schedule, self._bootstrap) if training else None
        self.decisions = 0
        self.updates = 0
        self.update_log: list[tuple[int, float, float, float]] = []
        self._reward_sum = 0.0
        self._stash = None

    def _bootstrap(self, state, q_state, dt: float) -> float:
        return self.schedule.gamma**dt * max(self.table.values(q_state))

    def _choose(self, q_state: tuple) -> int:
        eps = self.epsilon.value(self.decisions) if self.training else 0.0
        if eps > 0.0 and self.rng.random() < eps:
            return int(self.rng.integers(0, 2))
        return self.table.greedy_action(q_state)

    def decide(self, ctx: DecisionContext) -> bool:
        feats = featurize(self.feature_version, ctx)
        q_state = self.quantizer(feats)
        action = self._choose(q_state)
        self.decisions += 1
        self._stash = (feats, q_state, action, ctx.ue_id, ctx.ue_type, ctx.time)
        return action == ACTION_ACCEPT

    def notify_decision(self, ctx: DecisionContext, accepted: bool) -> None:
        if not self.training or self.tracker is None:
            return
        feats, q_state, action, ue_id, ue_type, t = self._stash
        done = self.tracker.on_decision(ue_id, ue_type, feats, q_state, action, t, accepted)
        self._apply(done)

    def on_finish(self, ue_id: int, t: float) -> None:
        if self.training and self.tracker is not None:
            self._apply(self.tracker.on_finish(ue_id))

    def on_drop(self, ue_id: int, t: float, accept_time: float) -> None:
        if self.training and self.tracker is not None:
            self._apply(self.tracker.on_drop(ue_id, t - accept_time))

    def finalize(self, t: float) -> None:
        if self.training and self.tracker is not None:
            self._apply(self.tracker.flush_terminal())

    def _apply(self, transitions) -> None:
        for tr in transitions:
            before = self.table.values(tr.q_state)[tr.action]
            after = ql_update(self.table, tr)
            self.updates += 1
            self._reward_sum += tr.reward
            self.update_log.append(
                (self.updates, (after - before) ** 2, self.epsilon.value(self.decisions),
                 self._reward_sum))

    def diagnostics(self) -> dict:
        return {"q_entries": len(self.table.q), "updates": self.updates,
                "unresolved": self.tracker.unresolved() if self.tracker else 0}


# -- deep Q-learning ----------------------------------------------------------

class DQLPolicy(AdmissionPolicy):
    """Epsilon-greedy agent over a prediction network with a periodic target copy."""

    name = "dql"

    def __init__(self, net: mlp.MLP, schedule: RewardSchedule, *,
                 feature_version: int = 2, learning_rate: float = 1e-4,
                 target_copy_period: int = 500, reward_scale: float = 1.0,
                 reward_baseline: bool = False,
                 epsilon: EpsilonSchedule = GREEDY, rng=None, training: bool = False):
        self.pnn = net
        self.tnn = mlp.clone(net)
        self.adam = mlp.AdamState.for_net(net, learning_rate)
        self.schedule = schedule
        self.feature_version = feature_version
        self.target_copy_period = target_copy_period
        # the network regresses Q/reward_scale: same greedy decisions, but the
        # parameters stay within reach of the small Adam steps
        self.reward_scale = reward_scale
        # optional differential form: regress against (r - mean reward), which
        # keeps the value magnitude near zero. Subtracting a shared baseline
        # leaves the greedy policy unchanged but removes the long value ramp
        # (and the sampling-time biases it feeds into bootstrap targets).
        self.reward_baseline = reward_baseline
        self.baseline = 0.0
        self.baseline_rate = 1e-3
        self.epsilon = epsilon
        self.rng = rng or np.random.default_rng(0)
        self.training = training
        self.tracker = TransitionTracker(schedule, self._bootstrap) if training else None
        self.decisions = 0
        self.updates = 0
        self.update_log: list[tuple[int, float, float, float]] = []
        self._reward_sum = 0.0
        self._stash = None

    def _bootstrap(self, state, q_state, dt: float) -> float:
        return self.schedule.gamma**dt * float(np.max(mlp.forward(self.tnn, state)))

    def decide(self, ctx: DecisionContext) -> bool:
        feats = featurize(self.feature_version, ctx)
        q = mlp.forward(self.pnn, feats)
        action = ACTION_ACCEPT if q[ACTION_ACCEPT] >= q[1 - ACTION_ACCEPT] else 1 - ACTION_ACCEPT
        eps = self.epsilon.value(self.decisions) if self.training else 0.0
        if eps > 0.0 and self.rng.random() < eps:
            action = int(self.rng.integers(0, 2))
        self.decisions += 1
        self._stash = (feats, action, ctx.ue_id, ctx.ue_type, ctx.time)
        return action == ACTION_ACCEPT

    def notify_decision(self, ctx: DecisionContext, accepted: bool) -> None:
        if not self.training or self.tracker is None:
            return
        feats, action, ue_id, ue_type, t = self._stash
        done = self.tracker.on_decision(ue_id, ue_type, feats, None, action, t, accepted)
        self._apply(done)

    def on_finish(self, ue_id: int, t: float) -> None:
        if self.training and self.tracker is not None:
            self._apply(self.tracker.on_finish(ue_id))

    def on_drop(self, ue_id: int, t: float, accept_time: float) -> None:
        if self.training and self.tracker is not None:
            self._apply(self.tracker.on_drop(ue_id, t - accept_time))

    def finalize(self, t: float) -> None:
        if self.training and self.tracker is not None:
            self._apply(self.tracker.flush_terminal())

    def dql_update(self, tr: PendingTransition) -> float:
        """One Adam step on the squared TD error of the taken action's Q value."""
        if tr.reward is None:
            raise ValueError("transition has no resolved reward")
        if tr.boot is not None:
            boot = tr.boot
        elif tr.next_state is not None:
            boot = self.schedule.gamma**tr.dt_next * float(np.max(mlp.forward(self.tnn, tr.next_state)))
        else:
            boot = 0.0
        r = tr.reward / self.reward_scale
        if self.reward_baseline:
            self.baseline += self.baseline_rate * (r - self.baseline)
            r -= self.baseline
        target = r + boot
        gw, gb, loss = mlp.backward_mse_single(self.pnn, tr.state, tr.action, target)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged: loss={loss} at update {self.updates}")
        mlp.adam_step(self.pnn, self.adam, gw, gb)
        self.updates += 1
        if self.updates % self.target_copy_period == 0:
            mlp.copy_parameters(self.pnn, self.tnn)
        return loss

    def _apply(self, transitions) -> None:
        for tr in transitions:
            loss = self.dql_update(tr)
            self._reward_sum += tr.reward
            self.update_log.append(
                (self.updates, loss, self.epsilon.value(self.decisions), self._reward_sum))

    def diagnostics(self) -> dict:
        return {"updates": self.updates,
                "unresolved": self.tracker.unresolved() if self.tracker else 0}


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path: str, policy: QLPolicy | DQLPolicy, meta: dict | None = None) -> None:
    """Persist a trained policy (weights, optimizer state, quantizer, metadata)."""
    data: dict = {"format": CHECKPOINT_FORMAT, "meta": dict(meta or {})}
    data["meta"].setdefault("gamma", policy.schedule.gamma)
    data["feature_version"] = policy.feature_version
    data["rewards"] = {"accept": list(policy.schedule.accept),
                       "block": list(policy.schedule.block),
                       "drop": list(policy.schedule.drop),
                       "gamma": policy.schedule.gamma}
    if isinstance(policy, QLPolicy):
        data["kind"] = "ql"
        data["alpha"] = policy.table.alpha
        data["quantizer"] = policy.quantizer.to_dict()
        data["table"] = [[list(k), v] for k, v in sorted(policy.table.q.items())]
    else:
        data["kind"] = "dql"
        data["arch"] = policy.pnn.sizes
        data["weights"] = [w.tolist() for w in policy.pnn.weights]
        data["biases"] = [b.tolist() for b in policy.pnn.biases]
        data["target_weights"] = [w.tolist() for w in policy.tnn.weights]
        data["target_biases"] = [b.tolist() for b in policy.tnn.biases]
        data["adam"] = {"learning_rate": policy.adam.learning_rate, "step": policy.adam.step,
                        "m_w": [m.tolist() for m in policy.adam.m_w],
                        "v_w": [v.tolist() for v in policy.adam.v_w],
                        "m_b": [m.tolist() for m in policy.adam.m_b],
                        "v_b": [v.tolist() for v in policy.adam.v_b]}
        data["target_copy_period"] = policy.target_copy_period
        data["reward_scale"] = policy.reward_scale
        data["reward_baseline"] = policy.reward_baseline
        data["baseline"] = policy.baseline
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_checkpoint(path: str, *, training: bool = False,
                    epsilon: EpsilonSchedule = GREEDY, rng=None) -> QLPolicy | DQLPolicy:
    """Rebuild a policy from a checkpoint; greedy evaluation mode by default."""
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {data.get('format')!r}")
    schedule = RewardSchedule(
        accept=tuple(data["rewards"]["accept"]), block=tuple(data["rewards"]["block"]),
        drop=tuple(data["rewards"]["drop"]), gamma=data["rewards"]["gamma"])
    if data["kind"] == "ql":
        policy = QLPolicy(Quantizer.from_dict(data["quantizer"]), schedule,
                          feature_version=data["feature_version"], alpha=data["alpha"],
                          epsilon=epsilon, rng=rng, training=training)
        policy.table.q = {tuple(k): list(v) for k, v in data["table"]}
        return policy
    net = mlp.MLP(sizes=data["arch"],
                  weights=[np.array(w) for w in data["weights"]],
                  biases=[np.array(b) for b in data["biases"]])
    policy = DQLPolicy(net, schedule, feature_version=data["feature_version"],
                       learning_rate=data["adam"]["learning_rate"],
                       target_copy_period=data["target_copy_period"],
                       reward_scale=data.get("reward_scale", 1.0),
                       reward_baseline=data.get("reward_baseline", False),
                       epsilon=epsilon, rng=rng, training=training)
    policy.baseline = data.get("baseline", 0.0)
    policy.tnn = mlp.MLP(sizes=data["arch"],
                         weights=[np.array(w) for w in data["target_weights"]],
                         biases=[np.array(b) for b in data["target_biases"]])
    adam = data["adam"]
    policy.adam.step = adam["step"]
    policy.adam.m_w = [np.array(m) for m in adam["m_w"]]
    policy.adam.v_w = [np.array(v) for v in adam["v_w"]]
    policy.adam.m_b = [np.array(m) for m in adam["m_b"]]
    policy.adam.v_b = [np.array(v) for v in adam["v_b"]]
    return policy
