"""Input checks shared by the estimators."""

from __future__ import annotations

from sklearn.exceptions import NotFittedError

from evsched.data_ingest import Episode
from evsched.env import DEFAULT_WEIGHTS, BatteryConfig, EnvContext
from evsched.profile_analysis import compute_cost_profile, compute_flex_index
from evsched.tariff import default_austin_2018


def check_episodes(episodes, *, allow_empty=False) -> list:
    if isinstance(episodes, Episode):
        episodes = [episodes]
    episodes = list(episodes)
    if not episodes and not allow_empty:
        raise ValueError("expected at least one episode")
    for ep in episodes:
        if not isinstance(ep, Episode):
            raise TypeError(f"expected Episode, got {type(ep).__name__}")
    return episodes


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit() first")


def build_context(estimator, episodes) -> EnvContext:
    """Resolve an estimator's battery/tariff/weights/profile params into an EnvContext.

    Profiles not given explicitly are computed from ``episodes``.
    """
    tariff = estimator.tariff or default_austin_2018()
    flex, costs = estimator.flex, estimator.costs
    if flex is None or costs is None:
        if episodes is None:
            raise ValueError("episodes are required when flex/costs profiles are not supplied")
        episodes = check_episodes(episodes)
        if flex is None:
            flex = compute_flex_index(episodes, estimator.active_kw)
        if costs is None:
            costs = compute_cost_profile(episodes, tariff)
    return EnvContext(
        flex=flex,
        costs=costs,
        tariff=tariff,
        battery=estimator.battery or BatteryConfig(),
        weights=tuple(estimator.weights) if estimator.weights is not None else DEFAULT_WEIGHTS,
    )
