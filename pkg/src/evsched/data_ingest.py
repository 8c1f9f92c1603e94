"""Smart-meter CSV ingestion, day episodes, synthetic households and splits.

CSV schema (UTF-8)::

    timestamp,ev_kw,non_ev_kw,pv_kw
    2018-06-01T00:00,0.0,0.41,0.0

Timestamps are local wall-clock time on 15-minute boundaries; every power
column is the average power over the interval in kW.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from functools import cached_property
from pathlib import Path

import numpy as np

from evsched.tariff import N_SLOTS

logger = logging.getLogger(__name__)

HEADER = ("timestamp", "ev_kw", "non_ev_kw", "pv_kw")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"
GAP_POLICIES = ("reject", "zero-fill")
EV_BLOCK_KW = 3.3


class ParseError(ValueError):
    """Malformed meter CSV content; ``lineno`` is 1-based and counts the header."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


@dataclass(frozen=True)
class MeterRecord:
    timestamp: datetime
    ev_kw: float
    non_ev_kw: float
    pv_kw: float

    def __post_init__(self):
        ts = self.timestamp
        if ts.minute % 15 or ts.second or ts.microsecond:
            raise ValueError(f"timestamp {ts} is not 15-minute aligned")
        for name in ("ev_kw", "non_ev_kw", "pv_kw"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name}={value!r} must be finite and non-negative")

    @property
    def slot(self) -> int:
        return self.timestamp.hour * 4 + self.timestamp.minute // 15


@dataclass(frozen=True, eq=False)
class Episode:
    """One day of 96 aligned records.

    ``p_day_ev`` is the kW-sum of the metered EV power, used as the day's
    charging budget.
    """

    date: date
    slots: tuple

    def __post_init__(self):
        if len(self.slots) != N_SLOTS:
            raise ValueError(f"episode {self.date} has {len(self.slots)} slots, expected {N_SLOTS}")
        for i, rec in enumerate(self.slots):
            if rec.timestamp.date() != self.date or rec.slot != i:
                raise ValueError(f"episode {self.date}: record {i} has timestamp {rec.timestamp}")

    @cached_property
    def ev_kw(self) -> np.ndarray:
        return _column(self.slots, "ev_kw")

    @cached_property
    def non_ev_kw(self) -> np.ndarray:
        return _column(self.slots, "non_ev_kw")

    @cached_property
    def pv_kw(self) -> np.ndarray:
        return _column(self.slots, "pv_kw")

    @cached_property
    def p_day_ev(self) -> float:
        return math.fsum(r.ev_kw for r in self.slots)

    @classmethod
    def from_arrays(cls, day: date, ev_kw, non_ev_kw, pv_kw) -> "Episode":
        start = datetime(day.year, day.month, day.day)
        slots = tuple(
            MeterRecord(start + timedelta(minutes=15 * i), float(e), float(n), float(p))
            for i, (e, n, p) in enumerate(zip(ev_kw, non_ev_kw, pv_kw, strict=True))
        )
        return cls(day, slots)

    def __eq__(self, other):
        return isinstance(other, Episode) and self.date == other.date and self.slots == other.slots

    def __hash__(self):
        return hash((self.date, self.slots))

    def __repr__(self):
        return f"Episode({self.date.isoformat()}, p_day_ev={self.p_day_ev:.2f})"


def _column(records, name):
    arr = np.array([getattr(r, name) for r in records], dtype=float)
    arr.setflags(write=False)
    return arr


class EpisodeList(list):
    """List of episodes carrying ingestion metadata.

    ``dropped_days`` lists dates discarded for missing slots under the
    ``reject`` gap policy; ``filled_slots`` counts zero-filled slots.
    """

    def __init__(self, episodes=(), dropped_days=(), filled_slots=0):
        super().__init__(episodes)
        self.dropped_days = list(dropped_days)
        self.filled_slots = filled_slots

    @property
    def n_dropped(self) -> int:
        return len(self.dropped_days)


def _parse_float(text: str, column: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{column}: not a number: {text!r}", lineno) from None
    if not math.isfinite(value) or value < 0:
        raise ParseError(f"{column}: must be finite and non-negative, got {text!r}", lineno)
    return value


def parse_meter_csv(path, gap_policy: str = "reject") -> EpisodeList:
    """Read a meter CSV into chronologically sorted complete-day episodes."""
    if gap_policy not in GAP_POLICIES:
        raise ValueError(f"gap_policy must be one of {GAP_POLICIES}, got {gap_policy!r}")
    path = Path(path)
    days: dict[date, dict[int, MeterRecord]] = defaultdict(dict)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"header must be {','.join(HEADER)}, got {header}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(HEADER):
                raise ParseError(f"expected {len(HEADER)} fields, got {len(row)}", lineno)
            try:
                ts = datetime.strptime(row[0].strip(), TIMESTAMP_FORMAT)
            except ValueError:
                raise ParseError(f"bad timestamp {row[0]!r}", lineno) from None
            if ts.minute % 15:
                raise ParseError(f"timestamp {row[0]!r} is not 15-minute aligned", lineno)
            values = [_parse_float(row[i].strip(), HEADER[i], lineno) for i in (1, 2, 3)]
            rec = MeterRecord(ts, *values)
            bucket = days[ts.date()]
            if rec.slot in bucket:
                raise ParseError(f"duplicate timestamp {row[0]!r}", lineno)
            bucket[rec.slot] = rec

    episodes, dropped, filled = [], [], 0
    for day in sorted(days):
        bucket = days[day]
        if len(bucket) < N_SLOTS:
            if gap_policy == "reject":
                dropped.append(day)
                continue
            start = datetime(day.year, day.month, day.day)
            for slot in range(N_SLOTS):
                if slot not in bucket:
                    bucket[slot] = MeterRecord(start + timedelta(minutes=15 * slot), 0.0, 0.0, 0.0)
                    filled += 1
        episodes.append(Episode(day, tuple(bucket[s] for s in range(N_SLOTS))))
    if dropped:
        logger.warning("dropped %d incomplete day(s) from %s", len(dropped), path)
    return EpisodeList(episodes, dropped, filled)


def write_meter_csv(episodes, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for ep in episodes:
            for rec in ep.slots:
                writer.writerow(
                    [rec.timestamp.strftime(TIMESTAMP_FORMAT), repr(rec.ev_kw), repr(rec.non_ev_kw), repr(rec.pv_kw)]
                )


def build_training_corpus(episodes, min_ev_kw: float = 0.0, split_fraction: float = 0.8):
    """Keep days with EV charging above ``min_ev_kw`` and split them chronologically.

    The earliest ``floor(split_fraction * n)`` qualifying days train, the rest test.
    """
    if not 0 < split_fraction < 1:
        raise ValueError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    kept = sorted((ep for ep in episodes if ep.p_day_ev > min_ev_kw), key=lambda ep: ep.date)
    if len(kept) < 2:
        raise ValueError(f"need at least 2 episodes with p_day_ev > {min_ev_kw}, got {len(kept)}")
    n_train = math.floor(split_fraction * len(kept))
    return kept[:n_train], kept[n_train:]


def _evening_bias() -> np.ndarray:
    hours = np.arange(N_SLOTS) / 4
    weights = np.exp(-0.5 * ((hours - 18.0) / 1.25) ** 2) + 0.15 * np.exp(-0.5 * ((hours - 21.5) / 1.0) ** 2)
    return weights / weights.sum()


@dataclass
class SynthConfig:
    """Parameters of a synthetic household; ``charge_window_bias`` weights block start slots."""

    seed: int = 0
    n_days: int = 60
    pv_peak_kw: float = 5.0
    load_scale: float = 1.0  # multiplies the non-EV load profile (about 0.66 kW mean at 1.0)
    ev_daily_kw_range: tuple = (30.0, 50.0)
    charge_window_bias: np.ndarray = field(default_factory=_evening_bias)
    start_date: date = date(2018, 6, 1)

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.n_days < 0:
            raise ValueError("n_days must be non-negative")
        if self.pv_peak_kw < 0:
            raise ValueError("pv_peak_kw must be non-negative")
        if self.load_scale < 0:
            raise ValueError("load_scale must be non-negative")
        lo, hi = self.ev_daily_kw_range
        if lo > hi:
            raise ValueError(f"infeasible ev_daily_kw_range ({lo}, {hi}): min > max")
        if lo < 0:
            raise ValueError("ev_daily_kw_range must be non-negative")
        bias = np.asarray(self.charge_window_bias, dtype=float)
        if bias.shape != (N_SLOTS,):
            raise ValueError(f"charge_window_bias must have {N_SLOTS} entries")
        if (bias < 0).any() or not bias.sum() > 0:
            raise ValueError("charge_window_bias must be non-negative and not all zero")


def synth_generate(cfg: SynthConfig) -> list[Episode]:
    """Deterministic synthetic household days (bell-shaped PV, two load humps, evening EV blocks)."""
    rng = np.random.default_rng(cfg.seed)
    hours = (np.arange(N_SLOTS) + 0.5) / 4
    pv_shape = np.where((hours > 6.5) & (hours < 19.5), np.exp(-0.5 * ((hours - 13.0) / 2.4) ** 2), 0.0)
    load_shape = (
        0.35
        + 0.6 * np.exp(-0.5 * ((hours - 7.5) / 1.0) ** 2)
        + 1.2 * np.exp(-0.5 * ((hours - 19.5) / 1.8) ** 2)
    )
    bias = np.asarray(cfg.charge_window_bias, dtype=float)
    lo, hi = cfg.ev_daily_kw_range
    episodes = []
    for d in range(cfg.n_days):
        day = cfg.start_date + timedelta(days=d)
        clearness = rng.uniform(0.55, 1.0)
        pv = cfg.pv_peak_kw * clearness * pv_shape * rng.uniform(0.9, 1.1, N_SLOTS)
        load_scale = rng.uniform(0.8, 1.25) * (1.15 if day.weekday() >= 5 else 1.0)
        non_ev = cfg.load_scale * load_shape * load_scale * rng.uniform(0.85, 1.15, N_SLOTS)

        target = rng.uniform(lo, hi)
        n_full = int(target // EV_BLOCK_KW)
        remainder = target - n_full * EV_BLOCK_KW
        if n_full and remainder < 1e-9:
            remainder = 0.0
        block = [EV_BLOCK_KW] * n_full + ([remainder] if remainder > 0 else [])
        ev = np.zeros(N_SLOTS)
        if block:
            length = len(block)
            starts = bias[: N_SLOTS - length + 1]
            if starts.sum() > 0:
                start = int(rng.choice(starts.size, p=starts / starts.sum()))
            else:
                start = N_SLOTS - length
            ev[start:start + length] = block

        episodes.append(
            Episode.from_arrays(day, ev, np.round(non_ev, 4), np.round(pv, 4))
        )
    return episodes
