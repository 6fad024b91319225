"""Timed experimental manipulations: boluses, infusions, antibody blockade, knockouts."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import Category, NetworkSpec


class EventKind(enum.Enum):
    BOLUS = "bolus"
    INFUSION = "infusion"
    BLOCKADE = "blockade"
    KNOCKOUT = "knockout"


class EventError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    kind: EventKind
    species: str
    time: float
    magnitude: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        t, m, dur = float(self.time), float(self.magnitude), float(self.duration)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "magnitude", m)
        object.__setattr__(self, "duration", dur)
        if not np.isfinite(t) or t < 0:
            raise EventError(f"{self.kind.value} on {self.species}: time must be >= 0, got {t}")
        if self.kind is EventKind.KNOCKOUT:
            if dur != 0:
                raise EventError("knockout has no duration")
            return
        if not (np.isfinite(m) and m > 0):
            raise EventError(
                f"{self.kind.value} on {self.species}: magnitude must be > 0, got {m}"
            )
        if self.kind is EventKind.BOLUS:
            if dur != 0:
                raise EventError("bolus has no duration")
        elif not (np.isfinite(dur) and dur > 0):
            raise EventError(
                f"{self.kind.value} on {self.species}: duration must be > 0, got {dur}"
            )

    @property
    def end(self) -> float:
        return self.time + self.duration

    def active_at(self, t: float) -> bool:
        """Half-open window [time, end)."""
        return self.kind in (EventKind.INFUSION, EventKind.BLOCKADE) and self.time <= t < self.end


def bolus(species: str, time: float, dose: float) -> Event:
    return Event(EventKind.BOLUS, species, time, dose)


def infusion(species: str, time: float, rate: float, duration: float) -> Event:
    return Event(EventKind.INFUSION, species, time, rate, duration)


def blockade(species: str, time: float, rate: float, duration: float) -> Event:
    return Event(EventKind.BLOCKADE, species, time, rate, duration)


def knockout(species: str, time: float = 0.0) -> Event:
    return Event(EventKind.KNOCKOUT, species, time)


class EventSchedule(tuple):
    """Time-sorted, immutable sequence of events."""

    def __new__(cls, events: Iterable[Event] = ()):
        events = tuple(events)
        for a, b in zip(events, events[1:]):
            if b.time < a.time:
                raise EventError(f"events not sorted by time: {a.time} then {b.time}")
        return super().__new__(cls, events)

    @classmethod
    def sorted(cls, events: Iterable[Event]) -> "EventSchedule":
        return cls(sorted(events, key=lambda e: e.time))

    def breakpoints(self) -> list[float]:
        pts = set()
        for e in self:
            pts.add(e.time)
            if e.kind in (EventKind.INFUSION, EventKind.BLOCKADE):
                pts.add(e.end)
        return sorted(pts)

    def last_time(self) -> float:
        return max((e.time for e in self), default=0.0)

    def last_end(self) -> float:
        return max((e.end for e in self), default=0.0)


def apply_bolus(x: np.ndarray, index: int, dose: float) -> np.ndarray:
    """Return a copy of ``x`` with ``dose`` added to one component."""
    if not dose > 0:
        raise EventError(f"bolus dose must be > 0, got {dose}")
    y = np.array(x, dtype=float)
    y[index] += dose
    return y


def effective_rates(spec: NetworkSpec, active: Sequence[Event]) -> tuple[np.ndarray, np.ndarray]:
    """Per-species constant inflow and added first-order decay from active windows."""
    inflow = np.zeros(spec.n)
    extra = np.zeros(spec.n)
    for e in active:
        i = spec.index(e.species)
        if e.kind is EventKind.INFUSION:
            inflow[i] += e.magnitude
        elif e.kind is EventKind.BLOCKADE:
            extra[i] += e.magnitude
        else:
            raise EventError(f"{e.kind.value} is not a rate event")
    return inflow, extra


def apply_knockout(spec: NetworkSpec, species: str | int) -> NetworkSpec:
    """Remove every production channel of a mediator; its outgoing edges stay."""
    i = spec.index(species)
    if spec.categories[i] is not Category.MEDIATOR:
        raise EventError(f"cannot knock out {spec.names[i]!r}: only mediators can be knocked out")
    w, w1, w2 = (np.array(spec.matrix(m)) for m in ("w", "w1", "w2"))
    w[i, :] = 0.0
    w1[i, :] = 0.0
    w2[i, :] = 0.0
    source = np.array(spec.source)
    source[i] = 0.0
    knocked = tuple(sorted(set(spec.meta.get("knockouts", ())) | {spec.names[i]}))
    out = spec.replace(w=w, w1=w1, w2=w2, source=source)
    out.meta["knockouts"] = knocked
    return out
