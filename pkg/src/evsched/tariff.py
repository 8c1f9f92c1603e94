"""Time-of-use tariff schedules indexed by 15-minute slot."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

N_SLOTS = 96


class Period(str, Enum):
    OFF_PEAK = "OffPeak"
    MID_PEAK = "MidPeak"
    ON_PEAK = "OnPeak"


@dataclass(frozen=True)
class Band:
    start_slot: int
    end_slot: int  # exclusive
    period: Period
    price: float


def clock_to_slot(hhmm: str) -> int:
    """Convert ``"HH:MM"`` to a slot index; ``"24:00"`` maps to 96."""
    try:
        hh, mm = hhmm.strip().split(":")
        hour, minute = int(hh), int(mm)
    except ValueError as exc:
        raise ValueError(f"bad clock time {hhmm!r}") from exc
    if minute % 15 or not 0 <= minute < 60 or not 0 <= hour <= 24 or (hour == 24 and minute):
        raise ValueError(f"clock time {hhmm!r} is not on a 15-minute boundary")
    return hour * 4 + minute // 15


class TouSchedule:
    """A set of price bands covering the 96 slots of a day exactly once.

    Instances are immutable; ``prices`` and ``periods`` are precomputed
    per-slot lookups.
    """

    def __init__(self, bands):
        bands = tuple(sorted(bands, key=lambda b: b.start_slot))
        owner = np.full(N_SLOTS, -1)
        for i, band in enumerate(bands):
            if not 0 <= band.start_slot < band.end_slot <= N_SLOTS:
                raise ValueError(f"band {band} outside slots 0..96")
            if band.price <= 0:
                raise ValueError(f"band {band} has non-positive price")
            span = owner[band.start_slot:band.end_slot]
            if (span >= 0).any():
                raise ValueError(f"band {band} overlaps another band")
            span[:] = i
        if (owner < 0).any():
            missing = np.flatnonzero(owner < 0)
            raise ValueError(f"bands leave slots uncovered: {missing.tolist()}")
        self.bands = bands
        self._owner = owner
        self.prices = np.array([bands[i].price for i in owner], dtype=float)
        self.periods = tuple(bands[i].period for i in owner)
        self.prices.setflags(write=False)

    def price_at(self, slot: int) -> float:
        return self.prices[_check_slot(slot)].item()

    def period_at(self, slot: int) -> Period:
        return self.periods[_check_slot(slot)]

    @property
    def max_price(self) -> float:
        return float(self.prices.max())

    def to_config(self) -> list[dict]:
        return [
            {
                "start": _slot_to_clock(b.start_slot),
                "end": _slot_to_clock(b.end_slot),
                "price": b.price,
                "period": b.period.value,
            }
            for b in self.bands
        ]

    @classmethod
    def from_config(cls, entries) -> "TouSchedule":
        """Build from a list of ``{start: "HH:MM", end: "HH:MM", price, [period]}``.

        When ``period`` is absent, bands are ranked by price: cheapest is
        off-peak, dearest on-peak, anything between mid-peak.
        """
        entries = list(entries)
        if not entries:
            raise ValueError("tariff override is empty")
        prices = sorted({float(e["price"]) for e in entries})
        bands = []
        for e in entries:
            price = float(e["price"])
            if "period" in e:
                period = Period(e["period"])
            elif price == prices[0]:
                period = Period.OFF_PEAK
            elif price == prices[-1]:
                period = Period.ON_PEAK
            else:
                period = Period.MID_PEAK
            bands.append(Band(clock_to_slot(e["start"]), clock_to_slot(e["end"]), period, price))
        return cls(bands)

    def __eq__(self, other):
        return isinstance(other, TouSchedule) and self.bands == other.bands

    def __repr__(self):
        return f"TouSchedule({len(self.bands)} bands)"


def _check_slot(slot: int) -> int:
    if not 0 <= slot < N_SLOTS:
        raise IndexError(f"slot {slot} outside 0..95")
    return slot


def _slot_to_clock(slot: int) -> str:
    return f"{slot // 4:02d}:{(slot % 4) * 15:02d}"


def price_at(schedule: TouSchedule, slot: int) -> float:
    return schedule.price_at(slot)


OFF_PEAK_PRICE = 0.01188
MID_PEAK_PRICE = 0.06218
ON_PEAK_PRICE = 0.11003


def default_austin_2018() -> TouSchedule:
    """Austin 2018 summer residential ToU rates ($/kWh), also used for weekends."""
    return TouSchedule(
        [
            Band(0, 24, Period.OFF_PEAK, OFF_PEAK_PRICE),
            Band(24, 56, Period.MID_PEAK, MID_PEAK_PRICE),
            Band(56, 80, Period.ON_PEAK, ON_PEAK_PRICE),
            Band(80, 88, Period.MID_PEAK, MID_PEAK_PRICE),
            Band(88, 96, Period.OFF_PEAK, OFF_PEAK_PRICE),
        ]
    )
