"""Rate law evaluation and fixed-step Heun integration with scheduled events."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .interventions import EventError, EventKind, EventSchedule, apply_bolus, apply_knockout, effective_rates
from .model import NetworkSpec


class DivergenceError(ArithmeticError):
    def __init__(self, species: str, time: float):
        self.species = species
        self.time = time
        super().__init__(f"integration diverged: {species} became non-finite at t = {time:g}")


class NegativeStateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class State:
    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    def __getitem__(self, i):
        return self.x[i]

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class StepControl:
    dt: float = 1e-3
    t_end: float = 100.0
    record_every: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be a positive integer")


@dataclass(frozen=True)
class EventMark:
    time: float
    kind: str
    species: str
    magnitude: float


@dataclass
class Trajectory:
    names: tuple[str, ...]
    t: np.ndarray
    x: np.ndarray
    events: list[EventMark] = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    @property
    def final(self) -> State:
        return State(self.x[-1], self.t[-1])

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.names.index(name)]

    def at(self, time: float, side: str = "right") -> np.ndarray:
        """Recorded state at ``time``; at an event instant ``side='left'`` gives the pre-event sample."""
        idx = np.flatnonzero(np.isclose(self.t, time, rtol=0, atol=1e-12))
        if len(idx) == 0:
            raise KeyError(f"no sample at t = {time}")
        return self.x[idx[0] if side == "left" else idx[-1]]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", *self.names])
            for t, row in zip(self.t, self.x):
                wr.writerow([repr(float(t)), *(repr(float(v)) for v in row)])

    def write_events_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "kind", "species", "magnitude"])
            for m in self.events:
                wr.writerow([repr(float(m.time)), m.kind, m.species, repr(float(m.magnitude))])

    @classmethod
    def read_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        return cls(tuple(header[1:]), body[:, 0], body[:, 1:])


def _kernel_args(spec: NetworkSpec):
    return (
        np.ascontiguousarray(spec.w),
        np.ascontiguousarray(spec.w1),
        np.ascontiguousarray(spec.w2),
        np.ascontiguousarray(spec.d),
        np.ascontiguousarray(spec.source),
        np.ascontiguousarray(spec.basal),
        np.asarray(spec.origin, dtype=np.int64),
        np.asarray([int(k) for k in spec.kinds], dtype=np.int64),
        _kernels.CLAMP_TOTAL if spec.clamp == "total" else _kernels.CLAMP_DIFFERENTIATION,
    )


def _vector(s) -> np.ndarray:
    return np.asarray(s.x if isinstance(s, State) else s, dtype=float)


def rhs(spec: NetworkSpec, s, inflow=None, extra=None) -> np.ndarray:
    """Time derivative of every species at state ``s`` (a State or a vector)."""
    x = _vector(s)
    if x.shape != (spec.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({spec.n},)")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        bad = [spec.names[i] for i in np.flatnonzero(~(x >= 0))]
        raise NegativeStateError(f"state components must be finite and >= 0: {bad}")
    zeros = np.zeros(spec.n)
    out = np.empty(spec.n)
    _kernels.rates(
        np.ascontiguousarray(x),
        *_kernel_args(spec),
        zeros if inflow is None else np.asarray(inflow, dtype=float),
        zeros if extra is None else np.asarray(extra, dtype=float),
        out,
    )
    return out


def _advance(spec, x, t, dt, duration, record_every, inflow, extra, step_offset=0):
    """Integrate over ``duration``; returns (x, t, rec_t, rec_x, full_steps_taken)."""
    nsteps = int(math.floor(duration / dt + 1e-9))
    last = duration - nsteps * dt
    if last <= 1e-12 * max(1.0, duration):
        last = 0.0
    nrec_max = (step_offset + nsteps) // record_every - step_offset // record_every
    rec_t = np.empty(max(nrec_max, 1))
    rec_x = np.empty((max(nrec_max, 1), spec.n))
    xo, to, nrec, status = _kernels.heun_run(
        np.ascontiguousarray(x), float(t), float(dt), nsteps, float(last),
        int(record_every), int(step_offset), *_kernel_args(spec), inflow, extra, rec_t, rec_x,
    )
    if status >= 0:
        raise DivergenceError(spec.names[status], to)
    return xo, to, rec_t[:nrec], rec_x[:nrec], nsteps


def step(spec: NetworkSpec, s, dt: float, inflow=None, extra=None) -> State:
    """One Heun step followed by projection onto the nonnegative orthant."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    x = _vector(s)
    t = s.t if isinstance(s, State) else 0.0
    zeros = np.zeros(spec.n)
    xo, to, *_ = _advance(
        spec, x, t, dt, dt, 1,
        zeros if inflow is None else np.asarray(inflow, float),
        zeros if extra is None else np.asarray(extra, float),
    )
    return State(xo, to)


def simulate(spec: NetworkSpec, s0, ctrl: StepControl, events=()) -> Trajectory:
    """Fixed-step Heun integration from ``s0`` to ``ctrl.t_end`` applying ``events``.

    Steps are split at every event start and window end so each event takes effect
    exactly at its timestamp. A bolus or knockout records the pre- and post-event
    samples at the same time.
    """
    schedule = events if isinstance(events, EventSchedule) else EventSchedule(events)
    x = _vector(s0).copy()
    t0 = s0.t if isinstance(s0, State) else 0.0
    if np.any(x < 0):
        raise NegativeStateError("initial state has negative components")
    for e in schedule:
        spec.index(e.species)
        if not (t0 <= e.time <= ctrl.t_end):
            raise EventError(f"event time {e.time} outside [{t0}, {ctrl.t_end}]")

    times = [t0]
    samples = [x.copy()]
    marks: list[EventMark] = []
    cur_spec = spec
    t = t0
    steps = 0
    pts = [p for p in schedule.breakpoints() if p <= ctrl.t_end]
    pts.append(ctrl.t_end)
    pending = list(schedule)
    for stop in pts:
        if stop > t:
            active = [e for e in schedule if e.active_at(t)]
            inflow, extra = effective_rates(cur_spec, active)
            x, _, rt, rx, n = _advance(cur_spec, x, t, ctrl.dt, stop - t, ctrl.record_every, inflow, extra, steps)
            steps += n
            times.extend(rt)
            samples.extend(rx)
            t = stop
            if not times or times[-1] != t:
                times.append(t)
                samples.append(x.copy())
        instant = [e for e in pending if e.time == stop]
        pending = [e for e in pending if e.time != stop]
        jumped = False
        for e in instant:
            i = cur_spec.index(e.species)
            if e.kind is EventKind.BOLUS:
                x = apply_bolus(x, i, e.magnitude)
                jumped = True
            elif e.kind is EventKind.KNOCKOUT:
                cur_spec = apply_knockout(cur_spec, i)
                x = x.copy()
                x[i] = 0.0
                jumped = True
            marks.append(EventMark(stop, e.kind.value, cur_spec.names[i], e.magnitude))
        if jumped:
            times.append(stop)
            samples.append(x.copy())
    return Trajectory(tuple(spec.names), np.asarray(times), np.asarray(samples), marks)


def euler_reference(spec: NetworkSpec, x0, t_end: float, dt: float = 1e-6, sample_dt: float = 0.1):
    """Projected forward Euler at a tiny step, sampled every ``sample_dt``; no events.

    A slow first-order cross-check for the Heun integrator. Returns (t, x).
    """
    every = int(round(sample_dt / dt))
    nsteps = int(round(t_end / dt))
    if every < 1 or nsteps < every:
        raise ValueError("need t_end >= sample_dt >= dt")
    rec = np.empty((nsteps // every, spec.n))
    zeros = np.zeros(spec.n)
    _kernels.euler_run(np.array(_vector(x0), dtype=float), float(dt), nsteps, *_kernel_args(spec),
                       zeros, zeros, every, rec)
    t = np.arange(1, len(rec) + 1) * every * dt
    return np.concatenate([[0.0], t]), np.vstack([_vector(x0), rec])
