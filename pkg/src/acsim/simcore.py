"""Discrete-event engine: arrivals, departures, ticks, dropping and rewards.

Event loop per connection request:
  arrival  -> update resources, drop check, policy decision,
              (on accept: update resources, drop check), schedule next arrival
  finish   -> detach, update resources
  drop     -> detach, update resources (synchronous inside the drop check)
  each second -> update resources, drop check

"Update resources" refreshes every active UE in turn: position, channel,
serving cell (3 dB hysteresis), SINR against the most recent cell loads,
channel rate and resource fraction, then recomputes each cell's occupied
fraction as the sum over its attached UEs.

State for all active UEs lives in flat numpy arrays so one update touches the
whole population at once. Randomness is split into named per-UE streams
(creation / LOS re-draws / shadowing) seeded from (run seed, stream, UE id),
which makes runs bit-reproducible regardless of population changes.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import radio
from .config import ArrivalSpec, RewardSchedule, Scenario
from .geom import N_CELLS
from .policies import AdmissionPolicy, DecisionContext

EV_FINISH, EV_TICK, EV_ARRIVAL = 0, 1, 2

_NORM_BLOCK = 64  # shadowing normals pre-drawn per UE


class ArrivalGenerator:
    """Per-cell Poisson request streams, optionally heterogeneous or time-varying.

    Heterogeneous rates are drawn uniformly from [0.5, 1.5] times the mean
    per-cell rate, once at t = 0 or afresh for every t_var epoch.
    """

    def __init__(self, spec: ArrivalSpec, rng):
        self.spec = spec
        self.rng = rng
        self._epoch_rates: list[np.ndarray] = []
        self._type_cdf = np.cumsum(spec.type_mix)
        self._cell_time = np.zeros(N_CELLS)
        self._cell_next = np.full(N_CELLS, np.inf)
        for j in range(N_CELLS):
            self._advance_cell(j)

    @property
    def _epoch_len(self) -> float:
        return self.spec.t_var if self.spec.mode == "time_varying" else np.inf

    def _epoch_of(self, t: float) -> int:
        return 0 if self._epoch_len == np.inf else int(t // self._epoch_len)

    def rates_for_epoch(self, e: int) -> np.ndarray:
        while len(self._epoch_rates) <= e:
            mean = self.spec.mean_cell_rate
            if self.spec.mode == "homogeneous":
                r = np.full(N_CELLS, mean)
            else:
                r = self.rng.uniform(0.5, 1.5, size=N_CELLS) * mean
            self._epoch_rates.append(r)
        return self._epoch_rates[e]

    def current_rate(self, cell: int, t: float) -> float:
        return float(self.rates_for_epoch(self._epoch_of(t))[cell])

    def _advance_cell(self, j: int) -> None:
        t = self._cell_time[j]
        while True:
            e = self._epoch_of(t)
            end = (e + 1) * self._epoch_len
            lam = self.rates_for_epoch(e)[j]
            if lam <= 0.0:
                if not np.isfinite(end):
                    self._cell_next[j] = np.inf
                    return
                t = end
                continue
            gap = self.rng.exponential(1.0 / lam)
            if t + gap <= end or not np.isfinite(end):
                self._cell_next[j] = t + gap
                return
            t = end  # crossed a rate epoch: restart from the boundary (memoryless)

    def next_request(self) -> tuple[float, int, int]:
        """Pop the next (time, cell, ue_type) request."""
        j = int(np.argmin(self._cell_next))
        t = float(self._cell_next[j])
        if not np.isfinite(t):
            raise RuntimeError("arrival process has zero rate everywhere")
        k = int(np.searchsorted(self._type_cdf, self.rng.random(), side="right"))
        k = min(k, len(self._type_cdf) - 1)
        self._cell_time[j] = t
        self._advance_cell(j)
        return t, j, k


def generate_arrivals(spec: ArrivalSpec, horizon: float, rng) -> list[tuple[float, int, int]]:
    """All requests with t <= horizon, in time order."""
    gen = ArrivalGenerator(spec, rng)
    out = []
    while True:
        t, cell, k = gen.next_request()
        if t > horizon:
            return out
        out.append((t, cell, k))


class Metrics:
    """Per-type counters plus the discounted reward aggregate."""

    def __init__(self, schedule: RewardSchedule):
        self.schedule = schedule
        k = schedule.n_types
        self.requests = [0] * k
        self.accepted = [0] * k
        self.blocked = [0] * k
        self.dropped = [0] * k
        self.finished = [0] * k
        self.reward = 0.0
        self.diagnostics: dict = {}

    def on_request(self, k: int) -> None:
        self.requests[k] += 1

    def on_accept(self, k: int) -> None:
        self.accepted[k] += 1
        self.reward += self.schedule.accept[k]

    def on_block(self, k: int) -> None:
        self.blocked[k] += 1
        self.reward += self.schedule.block[k]

    def on_finish(self, k: int) -> None:
        self.finished[k] += 1

    def on_drop(self, k: int, dt_drop: float) -> None:
        """Drop penalty discounted over the accept-to-drop interval."""
        if dt_drop < 0:
            raise ValueError("accept-to-drop interval must be nonnegative")
        self.dropped[k] += 1
        self.reward += self.schedule.gamma**dt_drop * self.schedule.drop[k]

    def clairvoyant_retro(self, k: int) -> None:
        """Re-book a dropped connection as blocked in hindsight."""
        self.accepted[k] -= 1
        self.blocked[k] += 1
        self.reward += self.schedule.block[k] - self.schedule.accept[k]

    def active(self, k: int) -> int:
        return self.accepted[k] - self.finished[k] - self.dropped[k]

    def acceptance_prob(self, k: int) -> float:
        return self.accepted[k] / self.requests[k] if self.requests[k] else 0.0

    def blocking_prob(self, k: int) -> float:
        return self.blocked[k] / self.requests[k] if self.requests[k] else 0.0

    def dropping_prob(self, k: int) -> float:
        return self.dropped[k] / self.accepted[k] if self.accepted[k] else 0.0

    def validate(self) -> None:
        for k in range(len(self.requests)):
            assert self.requests[k] == self.accepted[k] + self.blocked[k]
            assert self.active(k) >= 0


def drop_victims(bis: np.ndarray, drop_penalties: np.ndarray, ids: np.ndarray,
                 occupied: float) -> list[int]:
    """Eviction order for one overloaded cell (cost-per-resource rule).

    Repeatedly removes the UE with the smallest |drop reward| per unit of
    occupied resource (ties to the lowest UE id) until the load is <= 1.
    Returns positions into the input arrays, in eviction order.
    """
    if occupied <= 1.0:
        raise ValueError("cell is not overloaded")
    bis = np.asarray(bis, dtype=float)
    pen = np.abs(np.asarray(drop_penalties, dtype=float))
    alive = list(range(len(bis)))
    order = []
    while occupied > 1.0 and alive:
        metric = pen[alive] / bis[alive]
        pick = int(np.lexsort((np.asarray(ids)[alive], metric))[0])
        victim = alive.pop(pick)
        order.append(victim)
        occupied -= bis[victim]
    return order


def _seed_key(seed) -> tuple[int, ...]:
    return (int(seed),) if np.isscalar(seed) else tuple(int(s) for s in seed)


class Network:
    """Array-backed state of all in-system UEs plus the cell loads."""

    def __init__(self, scenario: Scenario, seed):
        self.sc = scenario
        self.seed = _seed_key(seed)
        self.layout = scenario.layout
        self.params = scenario.radio
        self.chp = scenario.channel
        self.dz2 = (scenario.layout.bs_height - scenario.channel.ue_height) ** 2
        self.thr = np.asarray(scenario.throughput_bps)
        self.pen = np.abs(np.asarray(scenario.rewards.drop))
        self.time = 0.0
        self.n = 0
        self._cap = 0
        self._grow(256)
        self.loads = np.zeros(N_CELLS)
        self.counts = np.zeros(N_CELLS, dtype=np.int64)
        self.id2slot: dict[int, int] = {}

    def _grow(self, cap: int) -> None:
        def extend(name, shape, dtype=float):
            old = getattr(self, name, None)
            arr = np.zeros(shape, dtype=dtype)
            if old is not None:
                arr[: self._cap] = old
            setattr(self, name, arr)

        extend("ue_id", (cap,), np.int64)
        extend("type_idx", (cap,), np.int64)
        extend("origin", (cap, 2))
        extend("direction", (cap, 2))
        extend("speed", (cap,))
        extend("start_t", (cap,))
        extend("accept_t", (cap,))
        extend("pos", (cap, 2))
        extend("travelled", (cap,))
        extend("next_anchor", (cap,))
        extend("near_los", (cap, N_CELLS), bool)
        extend("far_los", (cap, N_CELLS), bool)
        extend("shadow", (cap, N_CELLS))
        extend("pl_db", (cap, N_CELLS))
        extend("gains", (cap, N_CELLS))
        extend("serving", (cap,), np.int64)
        extend("rate", (cap,))
        extend("bi", (cap,))
        extend("holding", (cap,))
        extend("attached", (cap,), bool)
        extend("norm_buf", (cap, _NORM_BLOCK, N_CELLS))
        extend("norm_pos", (cap,), np.int64)
        for name in ("uni_rng",):
            lst = getattr(self, name, [])
            lst.extend([None] * (cap - len(lst)))
            setattr(self, name, lst)
        lst = getattr(self, "norm_rng", [])
        lst.extend([None] * (cap - len(lst)))
        self.norm_rng = lst
        self._cap = cap

    # -- population ------------------------------------------------------

    def create_ue(self, ue_id: int, ue_type: int, arrival_cell: int, t: float,
                  fixed_trajectory=None) -> int:
        """Spawn a pending (not yet attached) UE and evaluate its channel.

        A fixed trajectory (used by trace generation) skips the random draw of
        direction, speed, spawn point and holding time.
        """
        if self.n == self._cap:
            self._grow(self._cap * 2)
        i = self.n
        self.n += 1
        crng = np.random.default_rng([*self.seed, 1, ue_id])
        self.uni_rng[i] = np.random.default_rng([*self.seed, 2, ue_id])
        self.norm_rng[i] = np.random.default_rng([*self.seed, 3, ue_id])
        self.norm_pos[i] = _NORM_BLOCK  # buffer empty

        self.ue_id[i] = ue_id
        self.type_idx[i] = ue_type
        if fixed_trajectory is not None:
            self.direction[i] = fixed_trajectory.direction
            self.speed[i] = fixed_trajectory.speed
            self.holding[i] = np.inf
            p = self.layout.fold(np.asarray(fixed_trajectory.origin, dtype=float))
        else:
            angle = crng.uniform(0.0, 2.0 * np.pi)
            self.direction[i] = (np.cos(angle), np.sin(angle))
            self.speed[i] = crng.uniform(1.0, 5.0)
            self.holding[i] = crng.exponential(self.sc.run.mean_holding_time)
            # spawn uniformly over the arrival cell's hexagon
            center = self.layout.centers[arrival_cell]
            r = self.layout.cell_radius
            while True:
                p = self.layout.fold(center + crng.uniform(-r, r, size=2))
                if int(self.layout.assign_cell(p)) == arrival_cell:
                    break
        self.origin[i] = p
        self.pos[i] = p
        self.start_t[i] = t
        self.travelled[i] = 0.0
        self.attached[i] = False

        d2d = self.layout.d2d_to_centers(p)
        p_los = ch.los_probability(d2d)
        self.shadow[i] = crng.standard_normal(N_CELLS) * self.chp.shadow_sigma_db
        self.near_los[i] = crng.random(N_CELLS) < p_los
        self.far_los[i] = crng.random(N_CELLS) < p_los
        self.next_anchor[i] = self.chp.correlation_distance

        d3d = np.sqrt(d2d * d2d + self.dz2)
        self.pl_db[i] = ch.blend_pathloss_db(self.near_los[i], self.far_los[i], 0.0,
                                             d3d, self.chp.carrier_ghz, self.chp.ue_height)
        self.gains[i] = ch.link_gain_linear(self.pl_db[i], self.shadow[i])
        self.serving[i] = int(np.argmax(-(self.pl_db[i] + self.shadow[i])))

        g = self.gains[i]
        c = self.serving[i]
        pt = self.params.tx_power_mw
        interf = pt * (g @ self.loads - g[c] * self.loads[c])
        s = pt * g[c] / (self.params.noise_power_mw + interf)
        self.rate[i] = float(radio.channel_rate(s, self.params))
        self.bi[i] = self.thr[ue_type] / (self.rate[i] * self.params.bandwidth_hz)
        self.id2slot[ue_id] = i
        return i

    def attach(self, slot: int, t: float) -> None:
        self.attached[slot] = True
        self.accept_t[slot] = t
        c = self.serving[slot]
        self.loads[c] += self.bi[slot]
        self.counts[c] += 1

    def remove(self, slot: int) -> None:
        del self.id2slot[int(self.ue_id[slot])]
        last = self.n - 1
        if slot != last:
            for name in ("ue_id", "type_idx", "origin", "direction", "speed", "start_t",
                         "accept_t", "pos", "travelled", "next_anchor", "near_los",
                         "far_los", "shadow", "pl_db", "gains", "serving", "rate", "bi",
                         "attached", "norm_buf", "norm_pos", "holding"):
                arr = getattr(self, name)
                arr[slot] = arr[last]
            self.uni_rng[slot] = self.uni_rng[last]
            self.norm_rng[slot] = self.norm_rng[last]
            self.id2slot[int(self.ue_id[slot])] = slot
        self.uni_rng[last] = None
        self.norm_rng[last] = None
        self.n = last

    # -- channel/load refresh ---------------------------------------------

    def _draw_normals(self, n: int) -> np.ndarray:
        """Next shadowing normal 7-vector per UE, from per-UE block buffers."""
        refill = np.nonzero(self.norm_pos[:n] >= _NORM_BLOCK)[0]
        for i in refill:
            self.norm_buf[i] = self.norm_rng[i].standard_normal((_NORM_BLOCK, N_CELLS))
            self.norm_pos[i] = 0
        idx = self.norm_pos[:n]
        z = self.norm_buf[np.arange(n), idx]
        self.norm_pos[:n] += 1
        return z

    def _advance(self, t: float) -> None:
        """Kinematics + channel state for all in-system UEs up to time t."""
        n = self.n
        if n == 0:
            self.time = t
            return
        travelled = self.speed[:n] * (t - self.start_t[:n])
        raw = self.origin[:n] + travelled[:, None] * self.direction[:n]
        new_pos = self.layout.fold(raw)
        diff = new_pos[:, None, :] - (self.pos[:n, None, :] + self.layout.wrap_offsets)
        dx = np.sqrt((diff[..., 0] ** 2 + diff[..., 1] ** 2).min(axis=1))

        # every UE moves whenever the clock advances (speeds are >= 1 m/s)
        z = self._draw_normals(n)
        rho = np.exp(-dx / self.chp.correlation_distance)
        self.shadow[:n] = rho[:, None] * self.shadow[:n] + \
            np.sqrt(1.0 - rho * rho)[:, None] * self.chp.shadow_sigma_db * z

        self.pos[:n] = new_pos
        self.travelled[:n] = travelled
        d2d = self.layout.d2d_to_centers(new_pos)

        crossed = np.nonzero(travelled >= self.next_anchor[:n])[0]
        if crossed.size:
            p_los = ch.los_probability(d2d[crossed])
            for row, i in enumerate(crossed):
                # a UE can cross at most one anchor per step (<= 5 m/s, 1 s ticks)
                while travelled[i] >= self.next_anchor[i]:
                    self.near_los[i] = self.far_los[i]
                    self.far_los[i] = self.uni_rng[i].random(N_CELLS) < p_los[row]
                    self.next_anchor[i] += self.chp.correlation_distance

        frac = 1.0 - (self.next_anchor[:n] - travelled) / self.chp.correlation_distance
        d3d = np.sqrt(d2d * d2d + self.dz2)
        self.pl_db[:n] = ch.blend_pathloss_db(self.near_los[:n], self.far_los[:n],
                                              frac[:, None], d3d, self.chp.carrier_ghz,
                                              self.chp.ue_height)
        self.gains[:n] = ch.link_gain_linear(self.pl_db[:n], self.shadow[:n])

        signal = -(self.pl_db[:n] + self.shadow[:n])
        att = self.attached[:n]
        self.serving[:n][att] = radio.handover_all(signal[att], self.serving[:n][att],
                                                   self.params.handover_margin_db)
        self.time = t

    def _load_pass(self) -> None:
        n = self.n
        att = self.attached[:n]
        if not np.any(att):
            self.loads[:] = 0.0
            self.counts[:] = 0
            return
        s = radio.sinr_all(self.gains[:n], self.serving[:n], self.loads, self.params)
        self.rate[:n] = np.clip(np.log2(1.0 + s), self.params.rate_floor, self.params.rate_cap)
        self.bi[:n] = self.thr[self.type_idx[:n]] / (self.rate[:n] * self.params.bandwidth_hz)
        self.loads = np.bincount(self.serving[:n][att], weights=self.bi[:n][att],
                                 minlength=N_CELLS)
        self.counts = np.bincount(self.serving[:n][att], minlength=N_CELLS)

    def sweep(self, t: float, iterations: int | None = None) -> np.ndarray:
        """Refresh all UEs and the cell loads; return indices of overloaded cells."""
        if t > self.time:
            self._advance(t)
        for _ in range(iterations or self.sc.run.sweep_iterations):
            self._load_pass()
        return np.nonzero(self.loads > 1.0)[0]

    def overloaded_cells(self) -> np.ndarray:
        return np.nonzero(self.loads > 1.0)[0]

    def pick_victims(self, cell: int) -> list[int]:
        """UE ids to evict from an overloaded cell, in eviction order."""
        n = self.n
        cand = np.nonzero(self.attached[:n] & (self.serving[:n] == cell))[0]
        order = drop_victims(self.bi[cand], self.pen[self.type_idx[cand]],
                             self.ue_id[cand], float(self.loads[cell]))
        return [int(self.ue_id[cand[p]]) for p in order]

    def mean_cell_rate(self, cell: int) -> float:
        n = self.n
        mask = self.attached[:n] & (self.serving[:n] == cell)
        return float(self.rate[:n][mask].mean()) if np.any(mask) else 0.0


@dataclass
class _ActiveUE:
    ue_type: int
    accept_time: float


@dataclass
class RunResult:
    metrics: Metrics
    n_requests: int
    duration: float
    events: list = field(default_factory=list)


class Simulation:
    """One seeded run of the admission-control loop."""

    def __init__(self, scenario: Scenario, policy: AdmissionPolicy, seed,
                 oracle_rate: bool = True, rate_half_life: float = 500.0,
                 log_events: bool = False):
        self.sc = scenario
        self.policy = policy
        self.seed = _seed_key(seed)
        self.oracle_rate = oracle_rate
        self.net = Network(scenario, seed)
        self.arrivals = ArrivalGenerator(scenario.arrivals,
                                         np.random.default_rng([*self.seed, 0]))
        self.metrics = Metrics(scenario.rewards)
        self.active: dict[int, _ActiveUE] = {}
        self.heap: list = []
        self._seq = 0
        self._next_id = 0
        self.ticks = 0
        self.max_load_seen = 0.0
        self.log = [] if log_events else None
        self._rate_half_life = rate_half_life
        self._rate_est = np.full(N_CELLS, scenario.arrivals.mean_cell_rate)
        self._last_arrival = np.zeros(N_CELLS)

    def _push(self, t: float, kind: int, payload) -> None:
        heapq.heappush(self.heap, (t, kind, self._seq, payload))
        self._seq += 1

    def _log(self, t, kind, **info):
        if self.log is not None:
            self.log.append({"t": t, "event": kind, **info})

    def _drop_check(self, t: float) -> None:
        if self.net.n:
            self.max_load_seen = max(self.max_load_seen, float(self.net.loads.max()))
        dropped = False
        for cell in self.net.overloaded_cells():
            for ue_id in self.net.pick_victims(int(cell)):
                rec = self.active.pop(ue_id)
                slot = self.net.id2slot[ue_id]
                self.net.loads[cell] -= self.net.bi[slot]
                self.net.counts[cell] -= 1
                self.net.remove(slot)
                if self.policy.clairvoyant:
                    self.metrics.clairvoyant_retro(rec.ue_type)
                else:
                    self.metrics.on_drop(rec.ue_type, t - rec.accept_time)
                self.policy.on_drop(ue_id, t, rec.accept_time)
                self._log(t, "drop", ue=ue_id, cell=int(cell))
                dropped = True
        if dropped:
            self.net.sweep(t)

    def _update_rate_estimate(self, cell: int, t: float) -> None:
        gap = t - self._last_arrival[cell]
        self._last_arrival[cell] = t
        if gap <= 0:
            return
        w = 0.5 ** (gap / self._rate_half_life)
        self._rate_est[cell] = w * self._rate_est[cell] + (1.0 - w) / gap

    def _handle_arrival(self, t: float, cell: int, ue_type: int) -> None:
        self.net.sweep(t)
        self._drop_check(t)
        self._update_rate_estimate(cell, t)

        ue_id = self._next_id
        self._next_id += 1
        slot = self.net.create_ue(ue_id, ue_type, cell, t)
        cand = int(self.net.serving[slot])
        rate = (self.arrivals.current_rate(cand, t) if self.oracle_rate
                else float(self._rate_est[cand]))
        ctx = DecisionContext(
            ue_id=ue_id,
            ue_type=ue_type,
            n_types=self.sc.n_types,
            candidate_cell=cand,
            tentative_bi=float(self.net.bi[slot]),
            cell_loads=tuple(self.net.loads),
            cell_counts=tuple(int(c) for c in self.net.counts),
            cell_mean_rate=self.net.mean_cell_rate(cand),
            arrival_rate=rate,
            time=t,
        )
        accept = bool(self.policy.decide(ctx))
        self.metrics.on_request(ue_type)
        if accept:
            self.metrics.on_accept(ue_type)
            self.net.attach(slot, t)
            self.active[ue_id] = _ActiveUE(ue_type, t)
            self._push(t + self.net.holding[slot], EV_FINISH, ue_id)
            self.policy.notify_decision(ctx, True)
            self._log(t, "accept", ue=ue_id, cell=cand)
            self.net.sweep(t)
            self._drop_check(t)
        else:
            self.metrics.on_block(ue_type)
            self.policy.notify_decision(ctx, False)
            self.net.remove(slot)
            self._log(t, "block", ue=ue_id, cell=cand)

    def _handle_finish(self, t: float, ue_id: int) -> None:
        rec = self.active.pop(ue_id, None)
        if rec is None:
            return  # already dropped
        slot = self.net.id2slot[ue_id]
        self.net.remove(slot)
        self.metrics.on_finish(rec.ue_type)
        self.policy.on_finish(ue_id, t)
        self._log(t, "finish", ue=ue_id)
        self.net.sweep(t)

    def run(self, n_requests: int | None = None) -> RunResult:
        n_requests = n_requests if n_requests is not None else self.sc.run.n_requests
        tick = self.sc.run.tick_interval
        self._push(tick, EV_TICK, None)
        t_arr, cell, k = self.arrivals.next_request()
        self._push(t_arr, EV_ARRIVAL, (cell, k))
        done = 0
        t = 0.0
        while done < n_requests:
            t, kind, _, payload = heapq.heappop(self.heap)
            if kind == EV_FINISH:
                self._handle_finish(t, payload)
            elif kind == EV_TICK:
                self.ticks += 1
                self.net.sweep(t)
                self._drop_check(t)
                self._push(t + tick, EV_TICK, None)
            else:
                cell, k = payload
                self._handle_arrival(t, cell, k)
                done += 1
                t_arr, cell, k = self.arrivals.next_request()
                self._push(t_arr, EV_ARRIVAL, (cell, k))
        self.policy.finalize(t)
        self.metrics.diagnostics.update(self.policy.diagnostics())
        self.metrics.validate()
        return RunResult(metrics=self.metrics, n_requests=n_requests, duration=t,
                         events=self.log or [])


def run(scenario: Scenario, policy: AdmissionPolicy, seed: int,
        n_requests: int | None = None, **kwargs) -> RunResult:
    """Convenience wrapper: build and execute one simulation."""
    return Simulation(scenario, policy, seed, **kwargs).run(n_requests)
