"""Protocol library: builtin scenarios, dose scans and the redundancy experiment."""

from __future__ import annotations

import enum
import math
import weakref
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dynamics import State, StepControl, Trajectory, simulate
from .equilibria import Label, bistability_certificate, classify
from .formats import FormatError, line_of, parse_toml
from .interventions import (
    Event,
    EventError,
    EventKind,
    EventSchedule,
    blockade,
    bolus,
    infusion,
    knockout,
)
from .model import CYT_A, SPECIES_NAMES, NetworkSpec

SETTLING_MARGIN = 200.0
TAIL_FRACTION = 0.10
T0 = 10.0


class Outcome(str, enum.Enum):
    ENDS_TH1 = "EndsTH1"
    ENDS_TH2 = "EndsTH2"
    UNCONSTRAINED = "Unconstrained"

    def accepts(self, label: Label) -> bool:
        if self is Outcome.UNCONSTRAINED:
            return True
        return label is (Label.TH1 if self is Outcome.ENDS_TH1 else Label.TH2)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    init: str | np.ndarray
    events: EventSchedule
    horizon: float
    expected: Outcome = Outcome.UNCONSTRAINED
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "events", EventSchedule.sorted(self.events))
        object.__setattr__(self, "expected", Outcome(self.expected))
        if isinstance(self.init, str):
            if self.init not in ("th1", "th2"):
                raise ScenarioError(f"init must be 'th1', 'th2' or a state vector, got {self.init!r}")
        else:
            x = np.array(self.init, dtype=float)
            if x.ndim != 1 or np.any(x < 0) or not np.all(np.isfinite(x)):
                raise ScenarioError("explicit init must be a finite nonnegative vector")
            x.setflags(write=False)
            object.__setattr__(self, "init", x)
        need = self.events.last_end() + SETTLING_MARGIN
        if not self.horizon >= need:
            raise ScenarioError(
                f"scenario {self.name!r}: horizon {self.horizon} must be >= last event end + "
                f"{SETTLING_MARGIN:g} = {need:g}"
            )

    def with_magnitude(self, species: str, value: float) -> "Scenario":
        """Copy with the magnitude of the first event on ``species`` replaced."""
        events = list(self.events)
        for k, e in enumerate(events):
            if e.species == species and e.kind is not EventKind.KNOCKOUT:
                events[k] = replace(e, magnitude=value)
                return replace(self, events=EventSchedule(events))
        raise ScenarioError(f"scenario {self.name!r} has no event on {species!r}")

    def with_events(self, extra) -> "Scenario":
        return replace(self, events=EventSchedule.sorted([*self.events, *extra]))


@dataclass
class ScenarioResult:
    scenario: Scenario
    trajectory: Trajectory
    labels: list[Label]
    final_label: Label
    tail_stable: bool

    @property
    def passed(self) -> bool:
        return self.tail_stable and self.scenario.expected.accepts(self.final_label)

    def response(self) -> float:
        x = self.trajectory.final.x
        names = self.trajectory.names
        a = sum(x[i] for i, n in enumerate(names) if n == "cyt_a" or n.startswith("cyt_a."))
        b = sum(x[i] for i, n in enumerate(names) if n == "cyt_b" or n.startswith("cyt_b."))
        return float(a - b)


_cert_cache: dict[int, tuple[weakref.ref, dict]] = {}


def steady_states(spec: NetworkSpec) -> dict:
    """Bistability certificate of ``spec``, cached per spec object."""
    hit = _cert_cache.get(id(spec))
    if hit is not None and hit[0]() is spec:
        return hit[1]
    cert = bistability_certificate(spec)
    _cert_cache[id(spec)] = (weakref.ref(spec), cert)
    return cert


def initial_state(sc: Scenario, spec: NetworkSpec) -> np.ndarray:
    if isinstance(sc.init, str):
        return np.array(steady_states(spec)[sc.init].state.x)
    if len(sc.init) != spec.n:
        raise ScenarioError(f"init has {len(sc.init)} components, spec has {spec.n} species")
    return np.array(sc.init)


def run_scenario(sc: Scenario, spec: NetworkSpec | None = None, dt: float = 1e-3,
                 record_every: int = 100, x0=None) -> ScenarioResult:
    """Simulate ``sc`` and label every sample; the final label must hold over the last 10%."""
    if spec is None:
        from .formats import reference_spec

        spec = reference_spec()
    start = initial_state(sc, spec) if x0 is None else np.asarray(x0, dtype=float)
    traj = simulate(spec, State(start), StepControl(dt, sc.horizon, record_every), sc.events)
    labels = [classify(x, spec) for x in traj.x]
    final = labels[-1]
    tail = traj.t >= sc.horizon * (1 - TAIL_FRACTION)
    stable = all(lab is final for lab, keep in zip(labels, tail) if keep)
    return ScenarioResult(sc, traj, labels, final, stable)


# Protocol magnitudes fixed by calibration against the reference network.
TRANSFER_DOSE = 10.0
SUBTHRESHOLD_FRACTION = 0.1
IMMUNIZATION_ANTIGEN = 1.0
ADJUVANT_RATE = 10.0
ADJUVANT_DURATION = 5.0
HEAL_ANTIGEN = 1000.0
IL4_ANTIGEN = 320.0
IL4_DURATION = 1.0
IL4_MODERATE = 650.0
IL4_HIGH = 3000.0
ANTI_IL4_ANTIGEN = 193.0
ANTI_IL4_RATE = 10.0
ANTI_IL4_DURATION = 100.0
PULSE_RATE = 100000.0
PULSE_DURATION = 5.0
CONTINUOUS_RATE = 1.0
CONTINUOUS_DURATION = 290.0


def _horizon(events) -> float:
    return max(EventSchedule.sorted(events).last_end() + SETTLING_MARGIN, 300.0)


def _sc(name, init, events, expected, description) -> Scenario:
    return Scenario(name, init, EventSchedule.sorted(events), _horizon(events), Outcome(expected), description)


def transfer_events(dose: float, naive_fraction: float = 0.0) -> list:
    """Adoptive transfer as a TH1 bolus, optionally with ``naive_fraction * dose`` naive cells alongside."""
    if naive_fraction < 0:
        raise ValueError("naive_fraction must be >= 0")
    events = [bolus("th1", T0, dose)]
    if naive_fraction > 0:
        events.append(bolus("naive", T0, naive_fraction * dose))
    return events


def builtin_scenarios() -> list[Scenario]:
    il4 = [bolus("antigen", T0, IL4_ANTIGEN)]
    return [
        _sc("baseline", "th2", [], "EndsTH2", "healthy state left alone"),
        _sc("adoptive_transfer", "th2", transfer_events(TRANSFER_DOSE), "EndsTH1",
            "transfer of TH1 cells induces disease"),
        _sc("active_immunization", "th2",
            [bolus("antigen", T0, IMMUNIZATION_ANTIGEN), infusion("cyt_c", T0, ADJUVANT_RATE, ADJUVANT_DURATION)],
            "EndsTH1", "antigen with adjuvant induces disease"),
        _sc("free_antigen_heal", "th1", [bolus("antigen", T0, HEAL_ANTIGEN)], "EndsTH2",
            "free antigen drives anti-id cells and returns the system to TH2"),
        _sc("antigen_plus_il4", "th1", [*il4, infusion("cyt_b", T0, IL4_MODERATE, IL4_DURATION)], "EndsTH1",
            "moderate TH2 cytokine blocks antigen healing"),
        _sc("il4_high_dose", "th1", [*il4, infusion("cyt_b", T0, IL4_HIGH, IL4_DURATION)], "EndsTH2",
            "large TH2 cytokine dose overrides TH1 dominance"),
        _sc("antigen_plus_anti_il4", "th1",
            [bolus("antigen", T0, ANTI_IL4_ANTIGEN), blockade("cyt_b", T0, ANTI_IL4_RATE, ANTI_IL4_DURATION)],
            "EndsTH1", "TH2 cytokine blockade also blocks antigen healing"),
        _sc("th1_pulse_heal", "th1", [infusion("cyt_a", T0, PULSE_RATE, PULSE_DURATION)], "EndsTH2",
            "short TH1 cytokine pulse heals through anti-id overshoot"),
        _sc("th1_continuous", "th1", [infusion("cyt_a", T0, CONTINUOUS_RATE, CONTINUOUS_DURATION)], "EndsTH1",
            "sustained TH1 cytokine keeps the TH1 profile"),
        _sc("subthreshold_transfer", "th2", transfer_events(SUBTHRESHOLD_FRACTION * TRANSFER_DOSE), "EndsTH2",
            "too few transferred cells"),
    ]


def builtin(name: str) -> Scenario:
    for sc in builtin_scenarios():
        if sc.name == name:
            return sc
    raise KeyError(f"no builtin scenario {name!r}")


# ---- scenario files -----------------------------------------------------

def loads_scenario(text: str, path=None) -> Scenario:
    doc = parse_toml(text, path)

    def fail(msg, *needles):
        raise FormatError(msg, path, line_of(text, *needles) if needles else None)

    for key in ("name", "init", "horizon", "expected"):
        if key not in doc:
            fail(f"missing key {key!r}")
    events = []
    for k, rec in enumerate(doc.get("events", [])):
        anchor = f'species = "{rec.get("species", "")}"'
        if rec.get("species", "").split(".")[0] not in SPECIES_NAMES:
            fail(f"event {k}: unknown species {rec.get('species')!r}", anchor)
        try:
            events.append(
                Event(
                    EventKind(rec["kind"]),
                    rec["species"],
                    rec.get("time", 0.0),
                    rec.get("magnitude", 0.0),
                    rec.get("duration", 0.0),
                )
            )
        except KeyError as exc:
            fail(f"event {k}: missing key {exc}", anchor)
        except (EventError, ValueError, TypeError) as exc:
            fail(f"event {k}: {exc}", anchor)
    try:
        return Scenario(doc["name"], doc["init"], EventSchedule.sorted(events), float(doc["horizon"]),
                        Outcome(doc["expected"]), doc.get("description", ""))
    except ScenarioError as exc:
        fail(str(exc), "horizon")
    except ValueError as exc:
        fail(str(exc), "expected")


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read scenario: {exc.strerror}", p) from None
    return loads_scenario(text, p)


def dumps_scenario(sc: Scenario) -> str:
    import tomli_w

    doc = {
        "name": sc.name,
        "init": sc.init if isinstance(sc.init, str) else [float(v) for v in sc.init],
        "horizon": float(sc.horizon),
        "expected": sc.expected.value,
    }
    if sc.description:
        doc["description"] = sc.description
    doc["events"] = [
        {"kind": e.kind.value, "species": e.species, "time": e.time, "magnitude": e.magnitude, "duration": e.duration}
        for e in sc.events
    ]
    return tomli_w.dumps(doc)


# ---- dose scans ---------------------------------------------------------

@dataclass
class DoseResponse:
    parameter: str
    grid: np.ndarray
    labels: list[Label]
    response: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    def boundaries(self) -> list[int]:
        """Indices k where the label changes between grid[k] and grid[k+1]."""
        return [k for k in range(len(self.labels) - 1) if self.labels[k] is not self.labels[k + 1]]

    @property
    def threshold(self) -> float | None:
        b = self.boundaries()
        return float(self.grid[b[0] + 1]) if b else None

    def settled_index(self) -> int | None:
        """Index where the trailing run of the last label starts (None when the scan never changes)."""
        k = len(self.labels) - 1
        while k > 0 and self.labels[k - 1] is self.labels[-1]:
            k -= 1
        return k or None

    def pattern(self) -> str:
        return "".join({Label.TH1: "1", Label.TH2: "2", Label.OTHER: "o"}[lab] for lab in self.labels)

    def top_decade_variation(self) -> float:
        """Relative spread of the response over grid points within a decade of the largest."""
        top = self.response[self.grid >= self.grid[-1] / 10 * (1 - 1e-12)]
        scale = np.max(np.abs(top))
        if scale == 0:
            return 0.0
        return float((top.max() - top.min()) / scale)


def _scan_point(args):
    sc, spec, species, value, dt = args
    res = run_scenario(sc.with_magnitude(species, value), spec, dt)
    return res.final_label, res.response()


def dose_scan(sc: Scenario, parameter: str, grid, spec: NetworkSpec | None = None,
              dt: float = 1e-3, workers: int = 1) -> DoseResponse:
    """Run ``sc`` once per magnitude of its event on species ``parameter``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise ValueError("dose scan needs a grid of at least 3 magnitudes")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if spec is None:
        from .formats import reference_spec

        spec = reference_spec()
    sc.with_magnitude(parameter, float(grid[0]))
    steady_states(spec)
    jobs = [(sc, spec, parameter, float(g), dt) for g in grid]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_scan_point, jobs))
    else:
        out = [_scan_point(j) for j in jobs]
    return DoseResponse(parameter, grid, [o[0] for o in out], np.array([o[1] for o in out]))


def refine_threshold(sc: Scenario, parameter: str, lo: float, hi: float, spec: NetworkSpec | None = None,
                     dt: float = 1e-3, rel: float = 0.01) -> tuple[float, float]:
    """Geometric bisection of a label boundary bracketed by [lo, hi] until hi/lo <= 1 + rel."""
    if spec is None:
        from .formats import reference_spec

        spec = reference_spec()

    def lab(v):
        return run_scenario(sc.with_magnitude(parameter, v), spec, dt).final_label

    l_lo, l_hi = lab(lo), lab(hi)
    if l_lo is l_hi:
        raise ValueError(f"[{lo}, {hi}] does not bracket a label change")
    while hi / lo > 1 + rel:
        mid = math.sqrt(lo * hi)
        if lab(mid) is l_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


def log_grid(a: float, b: float, n: int) -> np.ndarray:
    if not (a > 0 and b > a and n >= 2):
        raise ValueError("log grid needs 0 < a < b and n >= 2")
    return np.geomspace(a, b, n)


# ---- redundancy ---------------------------------------------------------

def split_species(spec: NetworkSpec, species: str, k: int) -> NetworkSpec:
    """Replace ``species`` by ``k`` copies named ``species.1`` .. ``species.k``.

    Each copy gets 1/k of every production weight and a full copy of every
    outgoing weight, so the summed copies follow the original trajectory exactly.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    s = spec.index(species)
    n = spec.n
    names = list(spec.names)
    names[s] = f"{species}.1"
    new = [s] + [n + m for m in range(k - 1)]
    names += [f"{species}.{m + 2}" for m in range(k - 1)]
    N = n + k - 1
    src_of = list(range(n)) + [s] * (k - 1)  # original index each new index copies

    def grow(m):
        out = np.zeros((N, N))
        for i in range(N):
            for j in range(N):
                out[i, j] = m[src_of[i], src_of[j]]
        out[new, :] /= k
        # a copy's own column is only the original self-entry, not k of them
        for a in new:
            for b in new:
                if a != b:
                    out[a, b] = 0.0
        return out

    meta = dict(spec.meta)
    meta["split"] = {"species": species, "k": k}
    return NetworkSpec(
        w=grow(spec.w),
        w1=grow(spec.w1),
        w2=grow(spec.w2),
        d=np.array([spec.d[src_of[i]] for i in range(N)]),
        source=np.array([spec.source[src_of[i]] / (k if i in new else 1) for i in range(N)]),
        basal=np.array([spec.basal[src_of[i]] / (k if i in new else 1) for i in range(N)]),
        names=tuple(names),
        categories=tuple(spec.categories[src_of[i]] for i in range(N)),
        kinds=tuple(spec.kinds[src_of[i]] for i in range(N)),
        origin=tuple(spec.origin[src_of[i]] for i in range(N)),
        clamp=spec.clamp,
        anti_id_secretes_cyt_a=spec.anti_id_secretes_cyt_a,
        meta=meta,
    )


def split_state(x, spec: NetworkSpec, species: str, k: int) -> np.ndarray:
    s = spec.index(species)
    y = np.concatenate([np.asarray(x, dtype=float), np.full(k - 1, x[s] / k)])
    y[s] = x[s] / k
    return y


@dataclass
class RedundancyReport:
    k: int
    single: dict[str, Label]
    full: Label
    fidelity: float
    full_vs_knockout: float

    @property
    def passed(self) -> bool:
        return all(v is Label.TH1 for v in self.single.values()) and self.full is Label.TH2


def redundancy_experiment(spec: NetworkSpec | None = None, k: int = 2, dt: float = 1e-3,
                          scenario: Scenario | None = None) -> RedundancyReport:
    """Split CytA into ``k`` sub-cytokines and knock out each one under active immunization.

    ``fidelity`` is the largest deviation between the unknocked extended network
    (summed back) and the base network; ``full_vs_knockout`` compares the
    all-copies knockout with knocking out CytA itself.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if spec is None:
        from .formats import reference_spec

        spec = reference_spec()
    sc = scenario or builtin("active_immunization")
    ext = split_species(spec, "cyt_a", k)
    x0 = initial_state(sc, spec)
    y0 = split_state(x0, spec, "cyt_a", k)
    copies = [f"cyt_a.{m + 1}" for m in range(k)]

    def fold(traj):
        y = traj.x
        base = y[:, : spec.n].copy()
        base[:, CYT_A] = y[:, [ext.index(c) for c in copies]].sum(axis=1)
        return base

    ref = run_scenario(sc, spec, dt, x0=x0)
    plain = run_scenario(sc, ext, dt, x0=y0)
    fidelity = float(np.max(np.abs(fold(plain.trajectory) - ref.trajectory.x)))

    single = {}
    for c in copies:
        res = run_scenario(sc.with_events([knockout(c, 0.0)]), ext, dt, x0=y0)
        single[c] = res.final_label
    full = run_scenario(sc.with_events([knockout(c, 0.0) for c in copies]), ext, dt, x0=y0)
    whole = run_scenario(sc.with_events([knockout("cyt_a", 0.0)]), spec, dt, x0=x0)
    gap = float(np.max(np.abs(fold(full.trajectory) - whole.trajectory.x)))
    return RedundancyReport(k, single, full.final_label, fidelity, gap)
