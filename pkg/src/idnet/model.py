"""Species roster, interaction weights and topology checks for the id/anti-id network."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class Category(enum.Enum):
    CELL = "cell"
    MEDIATOR = "mediator"
    ANTIGEN = "antigen"


class Kind(enum.IntEnum):
    """How a species' production term is formed in the rate law."""

    SELF_MULTIPLICATIVE = 0  # growth scales with own concentration
    NON_SELF_MULTIPLICATIVE = 1  # growth independent of own concentration
    DECAYING = 2  # no endogenous production


NAIVE, TH1, TH2, ANTI_ID, MACROPHAGE, CYT_A, CYT_B, CYT_C, ANTIGEN = range(9)
N_SPECIES = 9

SPECIES_NAMES = (
    "naive",
    "th1",
    "th2",
    "anti_id",
    "macrophage",
    "cyt_a",
    "cyt_b",
    "cyt_c",
    "antigen",
)

CATEGORIES = (
    Category.CELL,
    Category.CELL,
    Category.CELL,
    Category.CELL,
    Category.CELL,
    Category.MEDIATOR,
    Category.MEDIATOR,
    Category.MEDIATOR,
    Category.ANTIGEN,
)

KINDS = (
    Kind.SELF_MULTIPLICATIVE,
    Kind.SELF_MULTIPLICATIVE,
    Kind.SELF_MULTIPLICATIVE,
    Kind.SELF_MULTIPLICATIVE,
    Kind.NON_SELF_MULTIPLICATIVE,
    Kind.NON_SELF_MULTIPLICATIVE,
    Kind.NON_SELF_MULTIPLICATIVE,
    Kind.NON_SELF_MULTIPLICATIVE,
    Kind.DECAYING,
)

# -1 marks "no origin": the differentiation channel is off for that row.
ORIGIN = (NAIVE, NAIVE, NAIVE, -1, -1, -1, -1, -1, -1)

ID_CELLS = (NAIVE, TH1, TH2)

# Licensed nonzero entries, keyed (matrix, target, source) -> sign.
TOPOLOGY: dict[tuple[str, int, int], int] = {
    # differentiation / naive proliferation, scaled by the origin concentration
    ("w1", NAIVE, ANTIGEN): +1,
    ("w1", TH1, CYT_A): +1,
    ("w1", TH1, CYT_C): +1,
    ("w1", TH2, CYT_B): +1,
    ("w1", TH1, CYT_B): -1,
    ("w1", TH2, CYT_A): -1,
    ("w1", TH2, CYT_C): -1,
    # interactions on cells
    ("w", ANTI_ID, NAIVE): +1,
    ("w", ANTI_ID, TH1): +1,
    ("w", ANTI_ID, TH2): +1,
    ("w", NAIVE, ANTI_ID): -1,
    ("w", TH1, ANTI_ID): -1,
    ("w", TH2, ANTI_ID): -1,
    ("w", ANTI_ID, CYT_B): -1,
    ("w", ANTI_ID, ANTI_ID): -1,
    ("w", MACROPHAGE, CYT_A): +1,
    ("w", MACROPHAGE, CYT_B): -1,
    ("w", NAIVE, CYT_C): +1,
    # secretion
    ("w2", CYT_A, TH1): +1,
    ("w2", CYT_B, TH2): +1,
    ("w2", CYT_C, MACROPHAGE): +1,
    ("w2", CYT_A, TH2): -1,
    ("w2", CYT_B, TH1): -1,
    ("w2", CYT_A, CYT_B): -1,
    ("w2", CYT_B, CYT_A): -1,
}

# Optional edge: anti-id cells secreting TH1 cytokine. Off in the reference network.
ANTI_ID_SECRETION_EDGE = ("w2", CYT_A, ANTI_ID)

# Pairs of entries that must carry the same value (TH1/TH2 symmetry).
TIED_WEIGHTS: tuple[tuple[tuple[str, int, int], tuple[str, int, int]], ...] = (
    (("w2", CYT_A, TH1), ("w2", CYT_B, TH2)),
    (("w1", TH1, CYT_A), ("w1", TH2, CYT_B)),
    (("w1", TH1, CYT_B), ("w1", TH2, CYT_A)),
    (("w2", CYT_A, TH2), ("w2", CYT_B, TH1)),
)

MATRICES = ("w", "w1", "w2")


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Full parameterization of the rate equations.

    ``source`` is a constant inflow per species (only the naive pool uses it in the
    reference network). ``clamp`` selects where the proliferation floor sits:
    ``"total"`` floors interaction plus differentiation, ``"differentiation"`` floors
    only the differentiation sum.
    """

    w: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    d: np.ndarray
    source: np.ndarray
    basal: np.ndarray | None = None
    names: tuple[str, ...] = SPECIES_NAMES
    categories: tuple[Category, ...] = CATEGORIES
    kinds: tuple[Kind, ...] = KINDS
    origin: tuple[int, ...] = ORIGIN
    clamp: str = "total"
    anti_id_secretes_cyt_a: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.names)
        for attr in ("w", "w1", "w2"):
            object.__setattr__(self, attr, _frozen(getattr(self, attr), (n, n)))
        object.__setattr__(self, "d", _frozen(self.d, (n,)))
        object.__setattr__(self, "source", _frozen(self.source, (n,)))
        basal = np.zeros(n) if self.basal is None else self.basal
        object.__setattr__(self, "basal", _frozen(basal, (n,)))
        object.__setattr__(self, "kinds", tuple(Kind(k) for k in self.kinds))
        object.__setattr__(self, "categories", tuple(Category(c) for c in self.categories))
        object.__setattr__(self, "origin", tuple(int(o) for o in self.origin))
        if not (len(self.categories) == len(self.kinds) == len(self.origin) == n):
            raise ValueError("species metadata lengths disagree")
        if self.clamp not in ("total", "differentiation"):
            raise ValueError(f"unknown clamp mode {self.clamp!r}")

    @property
    def n(self) -> int:
        return len(self.names)

    def index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.n:
                raise KeyError(f"species index {name} out of range")
            return int(name)
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def matrix(self, which: str) -> np.ndarray:
        return getattr(self, which)

    def replace(self, **changes) -> "NetworkSpec":
        fields = dict(
            w=self.w,
            w1=self.w1,
            w2=self.w2,
            d=self.d,
            source=self.source,
            basal=self.basal,
            names=self.names,
            categories=self.categories,
            kinds=self.kinds,
            origin=self.origin,
            clamp=self.clamp,
            anti_id_secretes_cyt_a=self.anti_id_secretes_cyt_a,
            meta=dict(self.meta),
        )
        fields.update(changes)
        return NetworkSpec(**fields)

    def with_weight(self, which: str, target: int, src: int, value: float) -> "NetworkSpec":
        m = np.array(self.matrix(which))
        m[target, src] = value
        return self.replace(**{which: m})

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        return (
            self.names == other.names
            and self.categories == other.categories
            and self.kinds == other.kinds
            and self.origin == other.origin
            and self.clamp == other.clamp
            and self.anti_id_secretes_cyt_a == other.anti_id_secretes_cyt_a
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("w", "w1", "w2", "d", "source", "basal")
            )
        )

    __hash__ = None


def zero_spec(d=None, source=None) -> NetworkSpec:
    """The 9-species roster with every weight zero (pure decay)."""
    z = np.zeros((N_SPECIES, N_SPECIES))
    return NetworkSpec(
        w=z,
        w1=z,
        w2=z,
        d=np.ones(N_SPECIES) if d is None else d,
        source=np.zeros(N_SPECIES) if source is None else source,
    )


def licensed_edges(spec: NetworkSpec) -> dict[tuple[str, int, int], int]:
    edges = dict(TOPOLOGY)
    if spec.anti_id_secretes_cyt_a:
        edges[ANTI_ID_SECRETION_EDGE] = +1
    return edges


@dataclass(frozen=True)
class Violation:
    rule: str
    where: tuple
    message: str

    def __str__(self):
        return f"{self.rule} {self.where}: {self.message}"


def validate_spec(spec: NetworkSpec) -> list[Violation]:
    """Return every violated invariant of a 9-species parameterization; empty if valid."""
    out: list[Violation] = []
    names = spec.names
    if spec.n != N_SPECIES or tuple(spec.names) != SPECIES_NAMES:
        out.append(Violation("roster", (), f"expected species {SPECIES_NAMES}, got {names}"))
        return out
    if spec.kinds != KINDS:
        out.append(Violation("kinds", (), "species kinds differ from the reference roster"))
    if spec.origin != ORIGIN:
        out.append(Violation("origin", (), "origin map differs from naive -> th1/th2/naive"))

    for i in range(spec.n):
        if not np.isfinite(spec.d[i]) or spec.d[i] <= 0:
            out.append(Violation("death-positive", (names[i],), f"d = {spec.d[i]!r} must be > 0"))
        if spec.source[i] < 0:
            out.append(Violation("source-nonnegative", (names[i],), f"source = {spec.source[i]!r}"))
    for cell in ID_CELLS:
        if not spec.d[ANTI_ID] < spec.d[cell]:
            out.append(
                Violation(
                    "lifespan-order",
                    ("anti_id", names[cell]),
                    f"d[anti_id] = {spec.d[ANTI_ID]} must be < d[{names[cell]}] = {spec.d[cell]}",
                )
            )

    allowed = licensed_edges(spec)
    magnitudes = []
    for which in MATRICES:
        m = spec.matrix(which)
        if not np.all(np.isfinite(m)):
            out.append(Violation("finite", (which,), "non-finite weight"))
            continue
        for i, j in zip(*np.nonzero(m)):
            key = (which, int(i), int(j))
            v = float(m[i, j])
            if key not in allowed:
                out.append(
                    Violation(
                        "forbidden-edge",
                        (which, names[i], names[j]),
                        f"weight {v} on an edge outside the topology",
                    )
                )
                continue
            if np.sign(v) != allowed[key]:
                out.append(
                    Violation(
                        "edge-sign",
                        (which, names[i], names[j]),
                        f"weight {v} has sign opposite to the topology ({allowed[key]:+d})",
                    )
                )
            magnitudes.append(((which, names[i], names[j]), abs(v)))

    if magnitudes:
        med = float(np.median([m for _, m in magnitudes]))
        for where, mag in magnitudes:
            if mag > 10 * med or mag < med / 10:
                out.append(
                    Violation(
                        "magnitude-decade",
                        where,
                        f"|w| = {mag:g} outside one decade of median {med:g}",
                    )
                )

    for a, b in TIED_WEIGHTS:
        va, vb = spec.matrix(a[0])[a[1], a[2]], spec.matrix(b[0])[b[1], b[2]]
        if va != vb:
            out.append(
                Violation(
                    "tied-weights",
                    ((a[0], names[a[1]], names[a[2]]), (b[0], names[b[1]], names[b[2]])),
                    f"{va!r} != {vb!r}",
                )
            )
    return out


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    sign: int
    matrix: str
    weight: float


@dataclass(frozen=True)
class SignedGraph:
    names: tuple[str, ...]
    edges: tuple[Edge, ...]

    @property
    def n(self) -> int:
        return len(self.names)

    def sign(self, source: int, target: int) -> int | None:
        """Net sign of the (source -> target) influence; None when absent.

        Parallel edges from different matrices are required to agree.
        """
        signs = {e.sign for e in self.edges if e.source == source and e.target == target}
        if not signs:
            return None
        if len(signs) > 1:
            raise ValueError(f"conflicting parallel edges {source}->{target}")
        return signs.pop()

    def successors(self, node: int) -> list[int]:
        return sorted({e.target for e in self.edges if e.source == node})

    def pairs(self) -> dict[tuple[int, int], int]:
        return {(e.source, e.target): self.sign(e.source, e.target) for e in self.edges}

    def without(self, pairs: Iterable[tuple[int, int]]) -> "SignedGraph":
        drop = set(pairs)
        return SignedGraph(self.names, tuple(e for e in self.edges if (e.source, e.target) not in drop))

    def flipped(self, source: int, target: int) -> "SignedGraph":
        return SignedGraph(
            self.names,
            tuple(
                Edge(e.source, e.target, -e.sign, e.matrix, -e.weight)
                if (e.source, e.target) == (source, target)
                else e
                for e in self.edges
            ),
        )


class InvalidSpecError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("invalid network spec:\n  " + "\n  ".join(map(str, violations)))


def signed_adjacency(spec: NetworkSpec, check: bool = True) -> SignedGraph:
    """Signed influence graph: one edge per nonzero weight, source species -> target species.

    Differentiation weights ``w1[i, j]`` are attributed to the influencing species ``j``.
    """
    if check and spec.n == N_SPECIES:
        violations = validate_spec(spec)
        if violations:
            raise InvalidSpecError(violations)
    edges = []
    for which in MATRICES:
        m = spec.matrix(which)
        for i, j in zip(*np.nonzero(m)):
            v = float(m[i, j])
            edges.append(Edge(int(j), int(i), 1 if v > 0 else -1, which, v))
    edges.sort(key=lambda e: (e.source, e.target, MATRICES.index(e.matrix)))
    return SignedGraph(tuple(spec.names), tuple(edges))
