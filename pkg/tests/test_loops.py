from itertools import combinations, permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from test_model import licensed_spec
from idnet.loops import enumerate_cycles, verify_loop_checklist
from idnet.model import ANTI_ID, CYT_B, ID_CELLS, SignedGraph, Edge, signed_adjacency


def brute_force_cycles(g: SignedGraph, max_len: int):
    """Every node subset, every ordering that starts at its smallest node."""
    pairs = g.pairs()
    out = set()
    for size in range(1, max_len + 1):
        for subset in combinations(range(g.n), size):
            first, rest = subset[0], subset[1:]
            for perm in permutations(rest):
                nodes = (first,) + perm
                links = list(zip(nodes, nodes[1:] + nodes[:1]))
                if all(p in pairs for p in links):
                    sign = int(np.prod([pairs[p] for p in links]))
                    out.add((nodes, sign))
    return out


def as_set(cycles):
    return {(c.nodes, c.sign) for c in cycles}


def test_reference_graph_matches_oracle():
    g = signed_adjacency(licensed_spec())
    for L in (3, 6, 9):
        assert as_set(enumerate_cycles(g, L)) == brute_force_cycles(g, L)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_random_graphs_match_oracle(seed, max_len):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    edges = tuple(
        Edge(j, i, int(rng.choice([-1, 1])), "w", 1.0)
        for i in range(n) for j in range(n) if rng.random() < 0.35
    )
    g = SignedGraph(tuple(f"s{k}" for k in range(n)), edges)
    got = enumerate_cycles(g, max_len)
    assert as_set(got) == brute_force_cycles(g, max_len)
    assert len(got) == len(as_set(got))
    assert [(c.length, c.nodes) for c in got] == sorted((c.length, c.nodes) for c in got)


def test_max_len_must_be_positive():
    with pytest.raises(ValueError):
        enumerate_cycles(signed_adjacency(licensed_spec()), 0)


def test_checklist_passes_on_licensed_topology():
    lines = verify_loop_checklist(signed_adjacency(licensed_spec()))
    assert len(lines) == 5
    assert all(ln.passed for ln in lines), [ln.detail for ln in lines]


def test_removing_suppression_fails_line_one():
    g = signed_adjacency(licensed_spec()).without([(ANTI_ID, i) for i in ID_CELLS])
    lines = verify_loop_checklist(g)
    assert not lines[0].passed


def test_flipping_cytokine_inhibition_fails_line_five():
    g = signed_adjacency(licensed_spec()).flipped(CYT_B, ANTI_ID)
    lines = verify_loop_checklist(g)
    assert [ln.passed for ln in lines] == [True, True, True, True, False]
