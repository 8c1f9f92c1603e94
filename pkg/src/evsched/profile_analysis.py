"""Historical charging-availability and cost profiles with their quartile thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from evsched.tariff import N_SLOTS, TouSchedule, default_austin_2018

DEFAULT_ACTIVE_KW = 0.1


def quantile(values, q: float) -> float:
    """Linear-interpolation quantile: rank ``h = q * (n - 1)`` into the sorted values."""
    v = sorted(float(x) for x in values)
    if not v:
        raise ValueError("quantile of an empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    h = q * (len(v) - 1)
    lo = math.floor(h)
    if lo + 1 >= len(v):
        return v[-1]
    return v[lo] + (h - lo) * (v[lo + 1] - v[lo])


def quartiles(values) -> tuple[float, float, float]:
    return quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)


@dataclass(frozen=True)
class FlexibilityProfile:
    """Per-slot fraction of historical days with EV charging active, plus quartiles."""

    index: np.ndarray
    q25: float
    q50: float
    q75: float

    @classmethod
    def from_index(cls, index) -> "FlexibilityProfile":
        index = np.asarray(index, dtype=float)
        if index.shape != (N_SLOTS,):
            raise ValueError(f"flexibility index must have {N_SLOTS} values")
        if ((index < 0) | (index > 1)).any():
            raise ValueError("flexibility index values must lie in [0, 1]")
        return cls(index, *quartiles(index))

    def to_dict(self) -> dict:
        return {"index": self.index.tolist(), "q25": self.q25, "q50": self.q50, "q75": self.q75}


@dataclass(frozen=True)
class CostProfile:
    """Average per-slot household cost ($ per interval); quartiles skip negative slots."""

    avg_cost: np.ndarray
    q25: float
    q50: float
    q75: float

    @classmethod
    def from_avg_cost(cls, avg_cost) -> "CostProfile":
        avg_cost = np.asarray(avg_cost, dtype=float)
        if avg_cost.shape != (N_SLOTS,):
            raise ValueError(f"cost profile must have {N_SLOTS} values")
        kept = avg_cost[avg_cost >= 0]
        if kept.size == 0:
            raise ValueError("every slot has negative average cost; cost quantiles are undefined")
        return cls(avg_cost, *quartiles(kept))

    def to_dict(self) -> dict:
        return {"avg_cost": self.avg_cost.tolist(), "q25": self.q25, "q50": self.q50, "q75": self.q75}


def compute_flex_index(episodes, active_kw: float = DEFAULT_ACTIVE_KW) -> FlexibilityProfile:
    episodes = list(episodes)
    if not episodes:
        raise ValueError("compute_flex_index needs at least one episode")
    active = np.array([ep.ev_kw > active_kw for ep in episodes])
    return FlexibilityProfile.from_index(active.sum(axis=0) / len(episodes))


def compute_cost_profile(episodes, tariff: TouSchedule | None = None) -> CostProfile:
    """Mean over days of ``price * (ev + non_ev - pv) / 4`` per slot."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("compute_cost_profile needs at least one episode")
    tariff = tariff or default_austin_2018()
    net = np.array([ep.ev_kw + ep.non_ev_kw - ep.pv_kw for ep in episodes])
    daily = tariff.prices * net / 4.0
    return CostProfile.from_avg_cost(daily.mean(axis=0))


class ProfileAnalyzer(BaseEstimator):
    """Fit the flexibility and cost profiles of one household.

    Parameters
    ----------
    active_kw : float
        EV power above which a slot counts as charging.
    tariff : TouSchedule or None
        Defaults to the Austin 2018 schedule.

    Attributes
    ----------
    flex_ : FlexibilityProfile
    costs_ : CostProfile
    """

    def __init__(self, active_kw=DEFAULT_ACTIVE_KW, tariff=None):
        self.active_kw = active_kw
        self.tariff = tariff

    def fit(self, episodes, y=None):
        episodes = list(episodes)
        self.flex_ = compute_flex_index(episodes, self.active_kw)
        self.costs_ = compute_cost_profile(episodes, self.tariff)
        self.n_days_ = len(episodes)
        return self

    def to_dict(self) -> dict:
        return {"flexibility": self.flex_.to_dict(), "cost": self.costs_.to_dict(), "n_days": self.n_days_}


def profiles_from_dict(data: dict) -> tuple[FlexibilityProfile, CostProfile]:
    """Rebuild profiles from ``ProfileAnalyzer.to_dict`` output, keeping stored quartiles."""
    flex = data["flexibility"]
    cost = data["cost"]
    f = FlexibilityProfile(np.asarray(flex["index"], dtype=float), flex["q25"], flex["q50"], flex["q75"])
    c = CostProfile(np.asarray(cost["avg_cost"], dtype=float), cost["q25"], cost["q50"], cost["q75"])
    if f.index.shape != (N_SLOTS,) or c.avg_cost.shape != (N_SLOTS,):
        raise ValueError(f"profile arrays must have {N_SLOTS} values")
    return f, c
