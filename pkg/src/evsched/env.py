"""Day-episode charging MDP: battery dynamics, sub-rewards and the step function.

The state observed by the agent is ``(price, pv_kw, non_ev_kw, ev_run_kw,
soc, slot)``. Only ``soc`` and ``ev_run_kw`` depend on past actions, and both
are fixed by the number of charge actions taken so far: SoC never decreases
inside an episode, so the charging power of the k-th charge action depends
only on k. The exact oracle relies on this.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from evsched.profile_analysis import CostProfile, FlexibilityProfile
from evsched.tariff import N_SLOTS, TouSchedule, default_austin_2018

BUDGET_TOLERANCE = 1.05
DEFAULT_WEIGHTS = (0.25, 0.25, 0.25, 0.25)


@dataclass(frozen=True)
class BatteryConfig:
    """EV pack and charger parameters (defaults: 24 kWh pack, 90.5% charger)."""

    e_batt: float = 24.0
    eta: float = 0.905
    soc_max: float = 1.0
    p_high: float = 3.3
    p_low: float = 1.5
    soc_knee: float = 0.9

    def __post_init__(self):
        if self.e_batt <= 0:
            raise ValueError("e_batt must be positive")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not 0 < self.soc_knee < self.soc_max <= 1:
            raise ValueError("need 0 < soc_knee < soc_max <= 1")
        if not 0 < self.p_low < self.p_high:
            raise ValueError("need 0 < p_low < p_high")


@dataclass(frozen=True)
class EnvState:
    price: float
    pv_kw: float
    non_ev_kw: float
    ev_run_kw: float
    soc: float
    slot: int

    def as_array(self) -> np.ndarray:
        return np.array([self.price, self.pv_kw, self.non_ev_kw, self.ev_run_kw, self.soc, self.slot], dtype=float)


@dataclass(frozen=True)
class RewardBreakdown:
    r1: float
    r2: float
    r3: float
    r4: float
    total: float
    cost: float

    def to_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "r3": self.r3, "r4": self.r4, "total": self.total, "cost": self.cost}


@dataclass(frozen=True)
class EnvContext:
    """Everything a step needs besides the episode: profiles, tariff, battery, weights."""

    flex: FlexibilityProfile
    costs: CostProfile
    tariff: TouSchedule = field(default_factory=default_austin_2018)
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    weights: tuple = DEFAULT_WEIGHTS

    def __post_init__(self):
        if len(self.weights) != 4 or any(w < 0 for w in self.weights):
            raise ValueError(f"weights must be 4 non-negative numbers, got {self.weights}")


def soc_start(p_day_ev: float, cfg: BatteryConfig = BatteryConfig()) -> float:
    """Starting SoC assuming the metered daily EV kW-sum refilled the pack; clamped at 0."""
    if p_day_ev < 0:
        raise ValueError("p_day_ev must be non-negative")
    return max(0.0, 1.0 - cfg.eta * p_day_ev / (4.0 * cfg.e_batt))


def charge_power(soc: float, cfg: BatteryConfig = BatteryConfig()) -> float:
    return cfg.p_high if soc <= cfg.soc_knee else cfg.p_low


def soc_increment(p_ev: float, cfg: BatteryConfig = BatteryConfig()) -> float:
    return cfg.eta * p_ev / (4.0 * cfg.e_batt)


def soc_update(soc: float, p_ev: float, cfg: BatteryConfig = BatteryConfig()) -> float:
    return min(cfg.soc_max, soc + soc_increment(p_ev, cfg))


def interval_cost(action: int, p_ev: float, non_ev_kw: float, pv_kw: float, price: float) -> float:
    """Household cost ($) of one 15-minute interval; negative under net export."""
    return price * (action * p_ev + non_ev_kw - pv_kw) / 4.0


def reward_r1(action: int, ev_run_after_kw: float, p_day_ev: float) -> float:
    # equality at the 105% budget counts as over budget
    within = ev_run_after_kw < BUDGET_TOLERANCE * p_day_ev
    if action:
        return 1.0 if within else -10.0
    return -0.5 if within else 1.0


def reward_r2(action: int, u_flex: float, flex: FlexibilityProfile) -> float:
    if not action:
        return 0.0
    if u_flex <= flex.q25:
        return -2.0
    if u_flex <= flex.q50:
        return -1.0
    if u_flex <= flex.q75:
        return 1.0
    return 2.0


def reward_r3(action: int, cost: float, costs: CostProfile) -> float:
    if not action:
        return 0.0
    if cost <= costs.q25:
        return 2.0
    if cost <= costs.q50:
        return 1.0
    if cost <= costs.q75:
        return -1.0
    return -2.0


def reward_r4(action: int, soc_after_unclipped: float) -> float:
    return -10.0 if action and soc_after_unclipped >= 1.0 else 0.0


def evaluate_action(slot, soc, ev_run_kw, action, episode, ctx: EnvContext):
    """Rewards and battery transition for one action, without building states.

    Returns ``(p_ev, next_soc, breakdown)``.
    """
    cfg = ctx.battery
    p_ev = charge_power(soc, cfg) if action else 0.0
    price = ctx.tariff.prices[slot]
    non_ev = episode.non_ev_kw[slot]
    pv = episode.pv_kw[slot]
    cost = interval_cost(action, p_ev, non_ev, pv, price)
    soc_raw = soc + soc_increment(p_ev, cfg)
    r1 = reward_r1(action, ev_run_kw + p_ev, episode.p_day_ev)
    r2 = reward_r2(action, ctx.flex.index[slot], ctx.flex)
    r3 = reward_r3(action, cost, ctx.costs)
    r4 = reward_r4(action, soc_raw)
    w1, w2, w3, w4 = ctx.weights
    total = w1 * r1 + w2 * r2 + w3 * r3 + w4 * r4
    return p_ev, min(cfg.soc_max, soc_raw), RewardBreakdown(r1, r2, r3, r4, float(total), float(cost))


def _observe(episode, ctx, slot, ev_run_kw, soc) -> EnvState:
    src = min(slot, N_SLOTS - 1)  # terminal state repeats the last slot's exogenous values
    return EnvState(
        float(ctx.tariff.prices[src]),
        float(episode.pv_kw[src]),
        float(episode.non_ev_kw[src]),
        float(ev_run_kw),
        float(soc),
        slot,
    )


def initial_state(episode, ctx: EnvContext) -> EnvState:
    return _observe(episode, ctx, 0, 0.0, soc_start(episode.p_day_ev, ctx.battery))


def step(state: EnvState, action: int, episode, ctx: EnvContext):
    """Advance one slot. Returns ``(next_state, reward, done, breakdown)``.

    The terminal state carries ``slot == 96``; stepping from it raises.
    """
    if state.slot >= N_SLOTS:
        raise RuntimeError("step() called on a finished episode")
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action!r}")
    p_ev, soc_next, br = evaluate_action(state.slot, state.soc, state.ev_run_kw, action, episode, ctx)
    nxt = _observe(episode, ctx, state.slot + 1, state.ev_run_kw + p_ev, soc_next)
    return nxt, br.total, nxt.slot == N_SLOTS, br


class ChargingEnv:
    """Stateful reset/step wrapper around :func:`step` for one context."""

    def __init__(self, ctx: EnvContext):
        self.ctx = ctx
        self.episode = None
        self.state = None
        self.done = True

    def reset(self, episode) -> EnvState:
        self.episode = episode
        self.state = initial_state(episode, self.ctx)
        self.done = False
        return self.state

    def step(self, action: int):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        self.state, reward, self.done, br = step(self.state, action, self.episode, self.ctx)
        return self.state, reward, self.done, br


@dataclass(frozen=True)
class Norms:
    """Feature scales; ``max_*`` come from the training corpus."""

    max_price: float
    max_pv: float
    max_non_ev: float

    def __post_init__(self):
        if min(self.max_price, self.max_pv, self.max_non_ev) <= 0:
            raise ValueError("normalisation scales must be positive")

    @classmethod
    def from_episodes(cls, episodes, tariff: TouSchedule) -> "Norms":
        episodes = list(episodes)
        max_pv = max((float(ep.pv_kw.max()) for ep in episodes), default=0.0)
        max_non_ev = max((float(ep.non_ev_kw.max()) for ep in episodes), default=0.0)
        # an all-zero column would give a zero scale; any positive value leaves zeros at 0
        return cls(tariff.max_price, max_pv or 1.0, max_non_ev or 1.0)

    def to_dict(self) -> dict:
        return {"max_price": self.max_price, "max_pv": self.max_pv, "max_non_ev": self.max_non_ev}


def budget_scale(p_day_ev: float) -> float:
    return BUDGET_TOLERANCE * p_day_ev if p_day_ev > 0 else 1.0


def normalize(state: EnvState, norms: Norms, p_day_ev: float) -> np.ndarray:
    return np.array(
        [
            state.price / norms.max_price,
            state.pv_kw / norms.max_pv,
            state.non_ev_kw / norms.max_non_ev,
            state.ev_run_kw / budget_scale(p_day_ev),
            state.soc,
            state.slot / (N_SLOTS - 1),
        ]
    )
