"""Steady states: damped Newton with integration fallback, stability, labels, bistability."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import State, _advance, rhs
from .model import ANTI_ID, CYT_A, CYT_B, ID_CELLS, TH1, NetworkSpec

NEWTON_MAX_ITER = 200
NEWTON_MAX_HALVINGS = 30
FALLBACK_BUDGET = 500.0
FALLBACK_DT = 1e-2
BORDERLINE = 1e-8


class Label(str, enum.Enum):
    TH1 = "TH1"
    TH2 = "TH2"
    OTHER = "Other"


class SteadyStateError(ArithmeticError):
    """Raised when no steady state is reached; carries the best iterate."""

    def __init__(self, message: str, best: np.ndarray, residual: float):
        super().__init__(f"{message} (best residual {residual:.3e})")
        self.best = best
        self.residual = residual


class CertificateError(RuntimeError):
    def __init__(self, message: str, reports=()):
        super().__init__(message)
        self.reports = list(reports)


@dataclass(frozen=True)
class SteadyStateReport:
    state: State
    residual: float
    stable: bool | None
    leading_eigen_real: float
    label: Label
    method: str = "newton"

    @property
    def converged(self) -> bool:
        return math.isfinite(self.residual)

    def to_dict(self, names) -> dict:
        return {
            "label": self.label.value,
            "residual": self.residual,
            "stable": self.stable,
            "leading_eigen_real": self.leading_eigen_real,
            "method": self.method,
            "state": {n: float(v) for n, v in zip(names, self.state.x)},
        }


def _group(spec: NetworkSpec | None, base: str, default: int) -> list[int]:
    if spec is None:
        return [default]
    idx = [i for i, n in enumerate(spec.names) if n == base or n.startswith(base + ".")]
    return idx or [default]


def classify(state, spec: NetworkSpec | None = None, rho: float = 2.0) -> Label:
    """TH1 if CytA > rho*CytB, TH2 if CytB > rho*CytA, otherwise Other.

    Split cytokine groups (``cyt_a.1``, ``cyt_a.2`` ...) are summed.
    """
    x = np.asarray(state.x if isinstance(state, State) else state, dtype=float)
    if np.any(x < 0):
        raise ValueError("state must be nonnegative")
    a = float(x[_group(spec, "cyt_a", CYT_A)].sum())
    b = float(x[_group(spec, "cyt_b", CYT_B)].sum())
    if a > rho * b:
        return Label.TH1
    if b > rho * a:
        return Label.TH2
    return Label.OTHER


def _steps(x: np.ndarray) -> np.ndarray:
    return 1e-6 * (1.0 + np.abs(x))


def jacobian(spec: NetworkSpec, x, *, check_smooth: bool = False):
    """Finite-difference Jacobian of rhs.

    Interior components use central differences; components within one step of
    zero use a forward (interior-directed) difference. With ``check_smooth`` the
    forward and backward halves are compared and ``(J, smooth)`` is returned.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    f0 = rhs(spec, x)
    h = _steps(x)
    J = np.empty((n, n))
    smooth = True
    for j in range(n):
        xp = x.copy()
        xp[j] += h[j]
        fwd = (rhs(spec, xp) - f0) / h[j]
        if x[j] >= h[j]:
            xm = x.copy()
            xm[j] -= h[j]
            bwd = (f0 - rhs(spec, xm)) / h[j]
            J[:, j] = 0.5 * (fwd + bwd)
            if np.any(np.abs(fwd - bwd) > 1e-3 * (1.0 + np.abs(fwd) + np.abs(bwd))):
                smooth = False
        else:
            J[:, j] = fwd
    return (J, smooth) if check_smooth else J


def stability(spec: NetworkSpec, state) -> float:
    """Leading real part of the Jacobian spectrum; NaN at a clamp-switching point."""
    x = np.asarray(state.x if isinstance(state, State) else state, dtype=float)
    J, smooth = jacobian(spec, x, check_smooth=True)
    if not smooth:
        return math.nan
    return float(np.max(np.linalg.eigvals(J).real))


def _residual(spec, x) -> float:
    return float(np.max(np.abs(rhs(spec, x))))


def _newton(spec, x, tol):
    """Damped projected Newton. Returns (x, residual, converged)."""
    r = _residual(spec, x)
    for _ in range(NEWTON_MAX_ITER):
        if r < tol:
            return x, r, True
        J = jacobian(spec, x)
        try:
            delta = np.linalg.solve(J, -rhs(spec, x))
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(J, -rhs(spec, x), rcond=None)[0]
        lam = 1.0
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            trial = np.maximum(x + lam * delta, 0.0)
            rt = _residual(spec, trial)
            if rt < r:
                break
            lam *= 0.5
        else:
            return x, r, False
        x, r = trial, rt
    return x, r, r < tol


def _integrate_to_rest(spec, x, tol, budget=FALLBACK_BUDGET, chunk=10.0):
    zeros = np.zeros(spec.n)
    t = 0.0
    best, best_r = x, _residual(spec, x)
    while t < budget and best_r >= tol:
        span = min(chunk, budget - t)
        x, *_ = _advance(spec, x, 0.0, FALLBACK_DT, span, 10**9, zeros, zeros)
        t += span
        r = _residual(spec, x)
        if r < best_r:
            best, best_r = x, r
    return best, best_r


def _report(spec, x, r, method) -> SteadyStateReport:
    lead = stability(spec, x)
    if math.isnan(lead) or abs(lead) <= BORDERLINE:
        stable = None
    else:
        stable = lead < 0
    label = classify(x, spec)
    if stable is None:
        label = Label.OTHER
    return SteadyStateReport(State(x), r, stable, lead, label, method)


def find_steady_state(spec: NetworkSpec, guess, tol: float = 1e-9, method: str = "newton") -> SteadyStateReport:
    """Locate a steady state near ``guess``.

    ``method='newton'`` starts with damped Newton and falls back to integration on
    stagnation; ``method='integrate'`` integrates first. Either way the result is
    polished by Newton and must reach ``residual < tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if method not in ("newton", "integrate"):
        raise ValueError(f"unknown method {method!r}")
    x = np.array(guess.x if isinstance(guess, State) else guess, dtype=float)
    if x.shape != (spec.n,) or np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("guess must be a finite nonnegative vector over all species")

    used = method
    if method == "newton":
        x1, r, ok = _newton(spec, x, tol)
        if not ok:
            used = "newton+integration"
            x1, r = _integrate_to_rest(spec, x1 if r < _residual(spec, x) else x, tol)
            x1, r, ok = _newton(spec, x1, tol)
    else:
        x1, r = _integrate_to_rest(spec, x, tol)
        x1, r, ok = _newton(spec, x1, tol)
    if not ok:
        raise SteadyStateError("no steady state within iteration and time budgets", x1, r)
    return _report(spec, x1, r, used)


def _id_total(x) -> float:
    return float(sum(x[i] for i in ID_CELLS))


def healthy_ordering(th2: SteadyStateReport, th1: SteadyStateReport) -> bool:
    a, b = th2.state.x, th1.state.x
    return _id_total(a) < _id_total(b) and a[ANTI_ID] < b[ANTI_ID]


TRANSFER_LADDER = (1.0, 3.0, 10.0, 30.0, 100.0)


def bistability_certificate(spec: NetworkSpec, tol: float = 1e-9) -> dict[str, SteadyStateReport]:
    """Two stable steady states, TH2 from a near-naive start and TH1 after a TH1 cell transfer.

    Raises CertificateError naming the missing state, or the failed ordering check.
    """
    start = np.full(spec.n, 0.01)
    start[spec.index("antigen")] = 0.0
    try:
        th2 = find_steady_state(spec, start, tol, method="integrate")
    except SteadyStateError as exc:
        raise CertificateError(f"TH2 state not found: {exc}") from exc
    if th2.label is not Label.TH2 or not th2.stable:
        raise CertificateError("TH2 state not found: naive start settles to a non-TH2 or unstable state", [th2])

    scale = max(float(th2.state.x[TH1] + th2.state.x[spec.index("th2")]), 0.1)
    th1 = None
    for mult in TRANSFER_LADDER:
        g = th2.state.x.copy()
        g[TH1] += mult * scale
        try:
            rep = find_steady_state(spec, g, tol, method="integrate")
        except SteadyStateError:
            continue
        if rep.label is Label.TH1 and rep.stable:
            th1 = rep
            break
    if th1 is None:
        raise CertificateError("TH1 state not found: no transfer dose leads to a stable TH1 state", [th2])
    if not healthy_ordering(th2, th1):
        raise CertificateError("ordering violated: id cells and anti-id must both be lower in the TH2 state", [th2, th1])
    return {"th2": th2, "th1": th1}
