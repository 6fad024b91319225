"""Signed feedback-loop enumeration and the five-structure loop checklist."""

from __future__ import annotations

from dataclasses import dataclass

from .model import ANTI_ID, CYT_A, CYT_B, CYT_C, ID_CELLS, MACROPHAGE, TH1, TH2, SignedGraph


@dataclass(frozen=True, order=True)
class Cycle:
    nodes: tuple[int, ...]
    sign: int

    @property
    def length(self) -> int:
        return len(self.nodes)

    def label(self, names) -> str:
        return " -> ".join(names[i] for i in self.nodes + self.nodes[:1])


def cycle_sign(pairs: dict[tuple[int, int], int], nodes) -> int:
    s = 1
    for a, b in zip(nodes, nodes[1:] + nodes[:1]):
        s *= pairs[(a, b)]
    return s


def enumerate_cycles(g: SignedGraph, max_len: int = 6) -> list[Cycle]:
    """All simple cycles of length <= max_len, each listed once from its smallest node.

    Sorted by (length, nodes).
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    pairs = g.pairs()
    succ = {v: g.successors(v) for v in range(g.n)}
    found = []

    def extend(path, on_path):
        start, last = path[0], path[-1]
        for nxt in succ[last]:
            if nxt == start:
                found.append(Cycle(tuple(path), cycle_sign(pairs, tuple(path))))
            elif nxt > start and nxt not in on_path and len(path) < max_len:
                path.append(nxt)
                on_path.add(nxt)
                extend(path, on_path)
                on_path.discard(nxt)
                path.pop()

    for s in range(g.n):
        extend([s], {s})
    return sorted(found, key=lambda c: (c.length, c.nodes))


@dataclass(frozen=True)
class CheckLine:
    name: str
    passed: bool
    detail: str


def verify_loop_checklist(g: SignedGraph, max_len: int = 6) -> list[CheckLine]:
    """Check the id/anti-id negative loop and the four loops nested inside it.

    Line 5 combines the negative TH2/anti-id cycle with the TH2 cytokine arm: the
    cycle th2 -> cyt_b -| anti_id -| th2 must be positive (the cytokine inhibits
    the suppressor), so flipping cyt_b -| anti_id fails the line.
    """
    cycles = enumerate_cycles(g, max_len)
    names = g.names

    def having(required, sign=None, exact=False):
        out = []
        for c in cycles:
            members = set(c.nodes)
            if exact and members != set(required):
                continue
            if not set(required) <= members:
                continue
            if sign is not None and c.sign != sign:
                continue
            out.append(c)
        return out

    lines = []

    idneg = [c for c in having({ANTI_ID}, -1) if set(c.nodes) & set(ID_CELLS)]
    lines.append(
        CheckLine(
            "id / anti-id negative loop",
            bool(idneg),
            idneg[0].label(names) if idneg else "no negative cycle through anti_id and an id cell",
        )
    )
    for node, cyt, title in ((TH1, CYT_A, "TH1 / cytokine A positive loop"), (TH2, CYT_B, "TH2 / cytokine B positive loop")):
        hit = having({node, cyt}, +1, exact=True)
        lines.append(CheckLine(title, bool(hit), hit[0].label(names) if hit else "missing or negative"))

    mac = having({TH1, CYT_A, MACROPHAGE, CYT_C}, +1, exact=True)
    lines.append(
        CheckLine(
            "TH1 / macrophage positive loop",
            bool(mac),
            mac[0].label(names) if mac else "missing or negative",
        )
    )

    th2_anti = having({TH2, ANTI_ID}, -1, exact=True)
    arm = having({TH2, CYT_B, ANTI_ID}, exact=True)
    arm_ok = bool(arm) and all(c.sign == +1 for c in arm)
    ok = bool(th2_anti) and arm_ok
    if ok:
        detail = f"{th2_anti[0].label(names)} (-); {arm[0].label(names)} (+)"
    elif not th2_anti:
        detail = "no negative th2 / anti_id cycle"
    elif not arm:
        detail = "no th2 -> cyt_b -> anti_id cycle"
    else:
        detail = f"{arm[0].label(names)} has sign {arm[0].sign:+d}, expected +1"
    lines.append(CheckLine("TH2 cytokine / anti-id negative loop", ok, detail))
    return lines
