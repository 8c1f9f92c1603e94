import numpy as np
import pytest

from evsched.data_ingest import Episode, SynthConfig, synth_generate
from evsched.env import EnvContext
from evsched.profile_analysis import CostProfile, FlexibilityProfile, compute_cost_profile, compute_flex_index
from evsched.tariff import default_austin_2018

from datetime import date


def make_episode(ev=None, non_ev=None, pv=None, day=date(2018, 6, 1)):
    z = np.zeros(96)
    return Episode.from_arrays(
        day,
        z if ev is None else ev,
        z if non_ev is None else non_ev,
        z if pv is None else pv,
    )


@pytest.fixture(scope="session")
def synth_days():
    return synth_generate(SynthConfig(seed=3, n_days=12))


@pytest.fixture(scope="session")
def synth_ctx(synth_days):
    return EnvContext(compute_flex_index(synth_days), compute_cost_profile(synth_days))


def manual_context(flex_index=None, flex_q=(0.05, 0.1, 0.6), cost_q=(0.01, 0.02, 0.05), weights=(0.25,) * 4, battery=None):
    flex = FlexibilityProfile(np.zeros(96) if flex_index is None else np.asarray(flex_index, float), *flex_q)
    costs = CostProfile(np.zeros(96), *cost_q)
    kw = {"battery": battery} if battery is not None else {}
    return EnvContext(flex, costs, default_austin_2018(), weights=tuple(weights), **kw)


# acceptance summary: one line per criterion at the end of the run
_ACCEPTANCE = {}
_NOTES = {}


@pytest.fixture
def acceptance_note():
    """``note(number, text)`` attaches a measured value to a criterion's summary line."""
    def note(number, text):
        _NOTES.setdefault(number, []).append(text)
    return note


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    passed = call.excinfo is None
    prev = _ACCEPTANCE.get(number, (True, title))
    _ACCEPTANCE[number] = (prev[0] and passed, title)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion test")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}")
        for text in _NOTES.get(number, []):
            terminalreporter.write_line(f"    {text}")
