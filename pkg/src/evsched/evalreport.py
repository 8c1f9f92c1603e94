"""Policy evaluation against the metered baseline: savings table, schedules, ToU peak shift."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from evsched.env import BUDGET_TOLERANCE, EnvContext, interval_cost
from evsched.oracle import ScheduleSolution, dp_optimal
from evsched.tariff import N_SLOTS, Period, TouSchedule

ENERGY_BAND = (0.95, BUDGET_TOLERANCE)
# slack for comparing float reward totals against the DP optimum
CERTIFICATE_TOL = 1e-9


@dataclass
class DayResult:
    date: str
    metered_cost: float
    optimized_cost: float
    savings_abs: float
    savings_pct: float | None  # None when the metered cost is not positive
    metered_ev_kw: float
    optimized_ev_kw: float
    energy_constraint_ok: bool
    per_period_kw: dict
    optimized_reward: float
    oracle_reward: float
    certificate_ok: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isnan(d["optimized_reward"]):
            d["optimized_reward"] = None
        return d


@dataclass
class EvalReport:
    days: list
    aggregate: dict
    schedules: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"days": [d.to_dict() for d in self.days], "aggregate": self.aggregate}


class MeteredPolicy:
    """Replays the historical EV consumption: slots with ev_kw > 0 count as charging."""

    def predict_schedule(self, episode) -> ScheduleSolution:
        return metered_schedule(episode, self.context_)

    def fit(self, ctx: EnvContext):
        self.context_ = ctx
        return self


def metered_schedule(episode, ctx: EnvContext) -> ScheduleSolution:
    prices = ctx.tariff.prices
    actions = (episode.ev_kw > 0).astype(np.int64)
    costs = [
        interval_cost(int(actions[t]), episode.ev_kw[t], episode.non_ev_kw[t], episode.pv_kw[t], prices[t])
        for t in range(N_SLOTS)
    ]
    ev = np.array(episode.ev_kw, dtype=float)
    return ScheduleSolution(
        actions=actions,
        total_reward=math.nan,  # the metered trajectory is not an environment rollout
        total_cost=math.fsum(costs),
        total_ev_kw=math.fsum(ev),
        per_step=[],
        ev_kw=ev,
    )


def period_masks(tariff: TouSchedule) -> dict:
    return {p.value: np.array([tariff.period_at(t) == p for t in range(N_SLOTS)]) for p in Period}


def peak_aggregate(metered_ev_kw, optimized_ev_kw, tariff: TouSchedule) -> dict:
    """EV kW-sums per ToU period for both schedules."""
    masks = period_masks(tariff)
    out = {}
    for name, ev in (("metered", metered_ev_kw), ("optimized", optimized_ev_kw)):
        ev = np.asarray(ev, dtype=float)
        out[name] = {period: math.fsum(ev[mask]) for period, mask in masks.items()}
    return out


def energy_ok(optimized_ev_kw: float, metered_ev_kw: float) -> bool:
    lo, hi = ENERGY_BAND
    return lo * metered_ev_kw <= optimized_ev_kw <= hi * metered_ev_kw


def _savings(metered: float, optimized: float):
    delta = metered - optimized
    return delta, (100.0 * delta / metered if metered > 0 else None)


def evaluate(policy, test, ctx: EnvContext, oracle_solutions=None) -> EvalReport:
    """Evaluate ``policy`` on test days.

    ``policy`` is anything with ``predict_schedule(episode)`` or the string
    ``"metered"``/``"oracle"``. The DP optimum of every day is computed as
    well; ``certificate_ok`` flags whether the policy's return stays at or
    below it.
    """
    test = list(test)
    if not test:
        raise ValueError("evaluate needs at least one test episode")
    if policy == "metered":
        policy = MeteredPolicy().fit(ctx)
    elif policy == "oracle":
        policy = _OraclePolicy(ctx)

    days, schedules = [], []
    for i, ep in enumerate(test):
        base = metered_schedule(ep, ctx)
        sol = policy.predict_schedule(ep)
        best = oracle_solutions[i] if oracle_solutions is not None else dp_optimal(ep, ctx)
        delta, pct = _savings(base.total_cost, sol.total_cost)
        reward = sol.total_reward
        certified = math.isnan(reward) or reward <= best.total_reward + CERTIFICATE_TOL
        days.append(
            DayResult(
                date=ep.date.isoformat(),
                metered_cost=base.total_cost,
                optimized_cost=sol.total_cost,
                savings_abs=delta,
                savings_pct=pct,
                metered_ev_kw=base.total_ev_kw,
                optimized_ev_kw=sol.total_ev_kw,
                energy_constraint_ok=energy_ok(sol.total_ev_kw, base.total_ev_kw),
                per_period_kw=peak_aggregate(base.ev_kw, sol.ev_kw, ctx.tariff),
                optimized_reward=reward,
                oracle_reward=best.total_reward,
                certificate_ok=certified,
            )
        )
        schedules.append((ep, base, sol))
    return EvalReport(days, aggregate(days), schedules)


class _OraclePolicy:
    def __init__(self, ctx):
        self.ctx = ctx

    def predict_schedule(self, episode):
        return dp_optimal(episode, self.ctx)


def aggregate(days) -> dict:
    """Average row: mean costs and the mean of the daily savings percentages."""
    metered = float(np.mean([d.metered_cost for d in days]))
    optimized = float(np.mean([d.optimized_cost for d in days]))
    delta, pct_of_means = _savings(metered, optimized)
    daily_pct = [d.savings_pct for d in days if d.savings_pct is not None]
    rewards = [d.optimized_reward for d in days if not math.isnan(d.optimized_reward)]
    return {
        "n_days": len(days),
        "metered_cost": metered,
        "optimized_cost": optimized,
        "savings_abs": delta,
        "savings_pct": float(np.mean(daily_pct)) if daily_pct else None,
        "savings_pct_of_mean_cost": pct_of_means,
        "energy_constraint_ok_fraction": float(np.mean([d.energy_constraint_ok for d in days])),
        "mean_optimized_reward": float(np.mean(rewards)) if rewards else None,
        "mean_oracle_reward": float(np.mean([d.oracle_reward for d in days])),
        "certificate_ok": all(d.certificate_ok for d in days),
    }


def _fmt_pct(pct, digits):
    return "n/a" if pct is None else f"{pct:.{digits}f}"


def format_savings_table(report: EvalReport) -> str:
    """Plain-text daily savings table: one row per day and an Average row."""
    header = ("Day", "Cost ($)", "Cost ($)", "Savings (%)")
    rows = [("", "metered", "optimized", "")]
    for d in report.days:
        y, m, dd = d.date.split("-")
        rows.append((f"{dd}/{m}/{y}", f"{d.metered_cost:.2f}", f"{d.optimized_cost:.2f}", _fmt_pct(d.savings_pct, 1)))
    agg = report.aggregate
    rows.append(("Average", f"{agg['metered_cost']:.2f}", f"{agg['optimized_cost']:.2f}", _fmt_pct(agg["savings_pct"], 2)))
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(4)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    return "\n".join(lines) + "\n"


SCHEDULE_COLUMNS = ("date", "slot", "metered_ev_kw", "optimized_action", "optimized_ev_kw", "price", "pv_kw", "non_ev_kw")


def write_schedules_csv(report: EvalReport, path, tariff: TouSchedule, header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCHEDULE_COLUMNS)
        for ep, base, sol in report.schedules:
            for t in range(N_SLOTS):
                writer.writerow([
                    ep.date.isoformat(), t, repr(float(base.ev_kw[t])), int(sol.actions[t]),
                    repr(float(sol.ev_kw[t])), repr(float(tariff.prices[t])),
                    repr(float(ep.pv_kw[t])), repr(float(ep.non_ev_kw[t])),
                ])
