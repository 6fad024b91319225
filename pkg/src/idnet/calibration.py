"""Seeded random search that manufactures a reference network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibria import CertificateError, SteadyStateError, bistability_certificate
from .model import ANTI_ID, ANTIGEN, NAIVE, TH2, TIED_WEIGHTS, TOPOLOGY, NetworkSpec, validate_spec

# (kind, target, source) where kind is a weight matrix, or a vector with source None.
Entry = tuple


@dataclass(frozen=True)
class Constraints:
    """Sign table, tied groups and the free rate parameters of the search."""

    topology: dict = field(default_factory=lambda: dict(TOPOLOGY))
    tied: tuple = TIED_WEIGHTS
    rates: tuple = (("d", ANTI_ID), ("d", ANTIGEN), ("source", NAIVE), ("basal", TH2))

    def flipped(self, which: str, target: int, source: int) -> "Constraints":
        topo = dict(self.topology)
        key = (which, target, source)
        if key not in topo:
            raise KeyError(f"{key} is not a licensed edge")
        topo[key] = -topo[key]
        return Constraints(topo, self.tied, self.rates)

    def groups(self) -> list[tuple[Entry, ...]]:
        """Free parameters: each a tuple of entries sharing one magnitude."""
        tied_of = {}
        for a, b in self.tied:
            tied_of[b] = a
        seen, out = set(), []
        for key in self.topology:
            head = tied_of.get(key, key)
            if head in seen:
                continue
            seen.add(head)
            members = (head,) + tuple(b for b, a in tied_of.items() if a == head)
            out.append(members)
        out.extend(((kind, i, None),) for kind, i in self.rates)
        return out


class CalibrationError(RuntimeError):
    def __init__(self, message: str, scorecard: dict | None = None):
        super().__init__(message)
        self.scorecard = scorecard or {}


def _read(spec: NetworkSpec, entry) -> float:
    kind, i, j = entry
    v = getattr(spec, kind)
    return float(abs(v[i, j]) if j is not None else v[i])


def center_of(spec: NetworkSpec, constraints: Constraints) -> np.ndarray:
    return np.array([_read(spec, g[0]) for g in constraints.groups()])


def build(base: NetworkSpec, constraints: Constraints, magnitudes) -> NetworkSpec:
    """Spec with every free group set to its magnitude (weights signed by the table)."""
    mats = {m: np.zeros((base.n, base.n)) for m in ("w", "w1", "w2")}
    vecs = {"d": np.array(base.d), "source": np.zeros(base.n), "basal": np.zeros(base.n)}
    for group, mag in zip(constraints.groups(), magnitudes):
        for kind, i, j in group:
            if j is None:
                vecs[kind][i] = mag
            else:
                mats[kind][i, j] = constraints.topology[(kind, i, j)] * mag
    return base.replace(**mats, **vecs, meta={})


def sample(rng: np.random.Generator, center: np.ndarray, width: float) -> np.ndarray:
    """Log-uniform draw within a window ``width`` decades wide around ``center``."""
    return center * 10.0 ** rng.uniform(-width / 2, width / 2, size=center.shape)


def scorecard(spec: NetworkSpec, dt: float = 1e-3, stop_early: bool = True) -> dict[str, bool]:
    """Acceptance checks in order; stops at the first failure when ``stop_early``."""
    from .scenarios import _cert_cache, builtin_scenarios, run_scenario

    card: dict[str, bool] = {}
    card["valid"] = not validate_spec(spec)
    if stop_early and not card["valid"]:
        return card
    try:
        cert = bistability_certificate(spec)
        card["bistable"] = True
    except (CertificateError, SteadyStateError, ArithmeticError):
        card["bistable"] = False
        return card
    import weakref

    _cert_cache[id(spec)] = (weakref.ref(spec), cert)
    for sc in builtin_scenarios():
        try:
            ok = run_scenario(sc, spec, dt).passed
        except ArithmeticError:
            ok = False
        card[sc.name] = ok
        if stop_early and not ok:
            break
    return card


@dataclass
class CalibrationResult:
    spec: NetworkSpec
    seed: int
    candidate: int
    scorecard: dict


def calibrate(center: NetworkSpec, seed: int, budget: int = 200, width: float = 1.0,
              constraints: Constraints | None = None, dt: float = 1e-3) -> CalibrationResult:
    """Return the first sampled spec that passes every acceptance check.

    Candidates are drawn log-uniformly, ``width`` decades wide around the
    magnitudes of ``center``, from ``numpy.random.default_rng(seed)``. Raises
    CalibrationError carrying the best partial scorecard when the budget runs out.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    constraints = constraints or Constraints()
    rng = np.random.default_rng(seed)
    mid = center_of(center, constraints)
    best: dict = {}
    for k in range(budget):
        spec = build(center, constraints, sample(rng, mid, width))
        card = scorecard(spec, dt)
        if not best or sum(card.values()) > sum(best.values()):
            best = card
        if all(card.values()) and len(card) == 12:
            spec.meta.update({"seed": seed, "candidate": k, "width": width})
            return CalibrationResult(spec, seed, k, card)
    raise CalibrationError(f"no acceptable spec in {budget} candidates", best)
