"""Exact reward-maximising schedules.

``dp_optimal`` runs a dynamic programme over ``(slot t, charge count k)``.
This is exact because the state depends on past actions only through k:

* SoC starts at ``soc_start`` and each charge adds ``eta * p / (4 E)`` with
  ``p = charge_power(SoC)``, so the SoC after k charges is a fixed
  sequence ``soc[k]`` (clipping at ``soc_max`` is also a function of k).
* The running EV kW-sum after k charges is ``run[k] = sum(p[0..k-1])``.
* Price, PV and non-EV load at slot t come from the episode and the tariff.
  They do not depend on actions.

So the reward of action a at slot t is a function ``R(t, k, a)`` and the
best return from ``(t, k)`` satisfies
``V(t, k) = max(R(t, k, 0) + V(t+1, k), R(t, k, 1) + V(t+1, k+1))``.
There are O(T^2) states, each with two actions.

``enumerate_exhaustive`` does not rely on this argument. It walks every
action string with the real step function and serves as an independent
check on short horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from evsched.env import (
    EnvContext,
    charge_power,
    evaluate_action,
    initial_state,
    soc_increment,
    soc_start,
    step,
)
from evsched.tariff import N_SLOTS
from evsched.validation import build_context, check_fitted

MAX_ENUM_HORIZON = 20


@dataclass
class ScheduleSolution:
    actions: np.ndarray
    total_reward: float
    total_cost: float
    total_ev_kw: float
    per_step: list
    ev_kw: np.ndarray  # scheduled EV power per slot

    def to_dict(self) -> dict:
        return {
            "actions": self.actions.tolist(),
            "total_reward": self.total_reward,
            "total_cost": self.total_cost,
            "total_ev_kw": self.total_ev_kw,
        }


def rollout_actions(actions, episode, ctx: EnvContext) -> ScheduleSolution:
    """Play a fixed action string through the environment and total it up."""
    actions = np.asarray(actions, dtype=np.int64)
    if actions.ndim != 1 or actions.size > N_SLOTS:
        raise ValueError("actions must be a 1-D sequence of at most 96 entries")
    state = initial_state(episode, ctx)
    per_step, ev = [], np.zeros(actions.size)
    for t, a in enumerate(actions):
        run_before = state.ev_run_kw
        state, _, _, br = step(state, int(a), episode, ctx)
        ev[t] = state.ev_run_kw - run_before
        per_step.append(br)
    return ScheduleSolution(
        actions=actions,
        total_reward=math.fsum(b.total for b in per_step),
        total_cost=math.fsum(b.cost for b in per_step),
        total_ev_kw=math.fsum(ev),
        per_step=per_step,
        ev_kw=ev,
    )


def charge_trajectory(p_day_ev: float, ctx: EnvContext, n: int = N_SLOTS):
    """SoC and running EV kW-sum before the k-th charge, for k = 0..n."""
    cfg = ctx.battery
    soc = np.empty(n + 1)
    run = np.empty(n + 1)
    soc[0], run[0] = soc_start(p_day_ev, cfg), 0.0
    for k in range(n):
        p = charge_power(soc[k], cfg)
        soc[k + 1] = min(cfg.soc_max, soc[k] + soc_increment(p, cfg))
        run[k + 1] = run[k] + p
    return soc, run


def _check_horizon(horizon):
    horizon = N_SLOTS if horizon is None else int(horizon)
    if not 1 <= horizon <= N_SLOTS:
        raise ValueError(f"horizon must lie in 1..{N_SLOTS}")
    return horizon


def dp_optimal(episode, ctx: EnvContext, horizon: int | None = None, energy_band=None) -> ScheduleSolution:
    """Reward-maximal schedule; ties go to idling, i.e. the lexicographically smallest string.

    ``energy_band=(lo, hi)`` additionally requires the final EV kW-sum to lie
    in ``[lo, hi] * p_day_ev``; the band is a hard terminal constraint, not a
    reward term. Raises ``ValueError`` if no schedule satisfies it.
    """
    T = _check_horizon(horizon)
    soc, run = charge_trajectory(episode.p_day_ev, ctx, T)
    gain = np.full((T, T + 1, 2), -np.inf)
    for t in range(T):
        for k in range(t + 1):
            for a in (0, 1):
                gain[t, k, a] = evaluate_action(t, soc[k], run[k], a, episode, ctx)[2].total

    value = np.zeros((T + 1, T + 2))
    if energy_band is not None:
        lo, hi = energy_band
        p = episode.p_day_ev
        feasible = (run >= lo * p) & (run <= hi * p)
        if not feasible.any():
            raise ValueError(f"no charge count reaches the energy band {energy_band}")
        value[T, : T + 1] = np.where(feasible, 0.0, -np.inf)
    for t in range(T - 1, -1, -1):
        k = np.arange(t + 1)
        value[t, : t + 1] = np.maximum(gain[t, k, 0] + value[t + 1, k], gain[t, k, 1] + value[t + 1, k + 1])

    actions = np.zeros(T, dtype=np.int64)
    k = 0
    for t in range(T):
        idle = gain[t, k, 0] + value[t + 1, k]
        charge = gain[t, k, 1] + value[t + 1, k + 1]
        if charge > idle:
            actions[t] = 1
            k += 1
    return rollout_actions(actions, episode, ctx)


def enumerate_exhaustive(episode, ctx: EnvContext, horizon: int) -> ScheduleSolution:
    """Brute force over every action string of the first ``horizon`` slots.

    Strings are visited in lexicographic order and only a strictly better
    total replaces the incumbent, matching the tie rule of ``dp_optimal``.
    """
    horizon = int(horizon)
    if horizon > MAX_ENUM_HORIZON:
        raise ValueError(f"exhaustive enumeration is limited to {MAX_ENUM_HORIZON} slots, got {horizon}")
    _check_horizon(horizon)

    best_total = -math.inf
    best_actions = None
    path_actions = [0] * horizon
    path_rewards = [0.0] * horizon

    def visit(state, depth):
        nonlocal best_total, best_actions
        if depth == horizon:
            total = math.fsum(path_rewards)
            if total > best_total:
                best_total, best_actions = total, list(path_actions)
            return
        for a in (0, 1):
            nxt, reward, _, _ = step(state, a, episode, ctx)
            path_actions[depth] = a
            path_rewards[depth] = reward
            visit(nxt, depth + 1)

    visit(initial_state(episode, ctx), 0)
    return rollout_actions(best_actions, episode, ctx)


class OracleScheduler(BaseEstimator):
    """Exact DP scheduler with an estimator interface.

    ``fit`` derives the flexibility and cost profiles from historical days
    unless ``flex`` and ``costs`` are supplied.
    """

    def __init__(self, battery=None, tariff=None, weights=None, active_kw=0.1, flex=None, costs=None):
        self.battery = battery
        self.tariff = tariff
        self.weights = weights
        self.active_kw = active_kw
        self.flex = flex
        self.costs = costs

    def fit(self, episodes=None, y=None):
        self.context_ = build_context(self, episodes)
        return self

    def predict_schedule(self, episode) -> ScheduleSolution:
        check_fitted(self, "context_")
        return dp_optimal(episode, self.context_)

    def predict(self, episodes) -> np.ndarray:
        """Action matrix of shape ``(n_days, 96)``."""
        return np.array([self.predict_schedule(ep).actions for ep in episodes], dtype=np.int64).reshape(-1, N_SLOTS)
