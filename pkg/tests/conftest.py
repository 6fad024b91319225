import numpy as np
import pytest

from idnet.model import ANTI_ID, N_SPECIES, NAIVE, TH2, TIED_WEIGHTS, TOPOLOGY, NetworkSpec


def random_spec(rng: np.random.Generator, clamp: str = "total") -> NetworkSpec:
    """A valid spec: licensed signs, magnitudes within a factor 3 of 1, ties honoured."""
    mats = {m: np.zeros((N_SPECIES, N_SPECIES)) for m in ("w", "w1", "w2")}
    for (m, i, j), s in TOPOLOGY.items():
        mats[m][i, j] = s * float(np.exp(rng.uniform(np.log(1 / 3), np.log(3))))
    for (ma, ia, ja), (mb, ib, jb) in TIED_WEIGHTS:
        mats[mb][ib, jb] = mats[ma][ia, ja]
    d = rng.uniform(0.5, 2.0, N_SPECIES)
    d[ANTI_ID] = rng.uniform(0.05, 0.45)
    source = np.zeros(N_SPECIES)
    source[NAIVE] = rng.uniform(0.0, 3.0)
    basal = np.zeros(N_SPECIES)
    basal[TH2] = rng.uniform(0.0, 0.5)
    return NetworkSpec(**mats, d=d, source=source, basal=basal, clamp=clamp)


def rhs_oracle(spec: NetworkSpec, x: np.ndarray, inflow=None, extra=None) -> np.ndarray:
    """Rate law evaluated row by row in plain numpy."""
    n = spec.n
    inflow = np.zeros(n) if inflow is None else inflow
    extra = np.zeros(n) if extra is None else extra
    out = np.zeros(n)
    for i in range(n):
        kind = int(spec.kinds[i])
        if kind == 0:
            inter = x[i] * float(spec.w[i] @ x)
            o = spec.origin[i]
            diff = x[o] * (spec.basal[i] + float(spec.w1[i] @ x)) if o >= 0 else 0.0
            prod = max(inter + diff, 0.0) if spec.clamp == "total" else inter + max(diff, 0.0)
        elif kind == 1:
            prod = max(float((spec.w[i] + spec.w2[i]) @ x), 0.0)
        else:
            prod = 0.0
        out[i] = prod + spec.source[i] + inflow[i] - (spec.d[i] + extra[i]) * x[i]
    return out


def decay_spec(d=None):
    from idnet.model import zero_spec

    d = np.ones(N_SPECIES) if d is None else np.asarray(d, dtype=float)
    return zero_spec(d=d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
