import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import decay_spec, random_spec, rhs_oracle
from idnet.dynamics import (
    DivergenceError,
    NegativeStateError,
    State,
    StepControl,
    Trajectory,
    euler_reference,
    rhs,
    simulate,
    step,
)
from idnet.interventions import EventError, blockade, bolus, infusion
from idnet.model import ANTI_ID, CYT_A, CYT_B, N_SPECIES, TH1


def test_zero_state_has_zero_derivative():
    d = np.ones(N_SPECIES)
    assert np.all(rhs(decay_spec(d), np.zeros(N_SPECIES)) == 0)


def test_pure_decay_rhs():
    d = np.linspace(0.5, 2.0, N_SPECIES)
    x = np.arange(1.0, N_SPECIES + 1)
    assert np.allclose(rhs(decay_spec(d), x), -d * x)


def test_negative_input_rejected():
    x = np.ones(N_SPECIES)
    x[3] = -1e-9
    with pytest.raises(NegativeStateError):
        rhs(decay_spec(), x)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), clamp=st.sampled_from(["total", "differentiation"]))
def test_rhs_matches_row_oracle(seed, clamp):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, clamp)
    x = rng.exponential(2.0, N_SPECIES) * (rng.random(N_SPECIES) > 0.2)
    inflow = rng.exponential(1.0, N_SPECIES) * (rng.random(N_SPECIES) > 0.7)
    extra = rng.exponential(1.0, N_SPECIES) * (rng.random(N_SPECIES) > 0.7)
    assert np.allclose(rhs(spec, x, inflow, extra), rhs_oracle(spec, x, inflow, extra), rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_cell_absent_without_origin_stays_absent(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    x = rng.exponential(2.0, N_SPECIES)
    x[ANTI_ID] = 0.0
    assert rhs(spec, x)[ANTI_ID] == 0.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_secretion_clamp_gives_zero_production(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    x = rng.exponential(2.0, N_SPECIES)
    x[TH1] = 0.0  # only inhibitory inputs reach cyt_a
    assert float((spec.w2[CYT_A] + spec.w[CYT_A]) @ x) < 0
    assert rhs(spec, x)[CYT_A] == -spec.d[CYT_A] * x[CYT_A]


def test_heun_single_step_on_decay():
    x = np.zeros(N_SPECIES)
    x[0] = 1.0
    out = step(decay_spec(), State(x), 0.1)
    assert out.x[0] == pytest.approx(0.905, abs=1e-15)
    assert out.t == pytest.approx(0.1)


def test_step_projects_onto_orthant():
    # a huge death rate would overshoot below zero without projection
    d = np.full(N_SPECIES, 50.0)
    out = step(decay_spec(d), State(np.ones(N_SPECIES)), 0.1)
    assert np.all(out.x >= 0)
    assert np.all(np.isfinite(out.x))


def test_empty_schedule_zero_horizon():
    x = np.full(N_SPECIES, 0.3)
    tr = simulate(decay_spec(), State(x), StepControl(1e-3, 0.0))
    assert len(tr) == 1
    assert np.array_equal(tr.x[0], x)


def test_decay_against_exponential():
    x = np.zeros(N_SPECIES)
    x[0] = 1.0
    tr = simulate(decay_spec(), State(x), StepControl(1e-3, 1.0))
    assert tr.t[-1] == 1.0
    assert abs(tr.final.x[0] - math.exp(-1)) < 1e-5


def test_convergence_order_two():
    x = np.zeros(N_SPECIES)
    x[0] = 1.0
    errs = []
    for dt in (0.1, 0.05, 0.025, 0.0125):
        tr = simulate(decay_spec(), State(x), StepControl(dt, 1.0, 1))
        errs.append(abs(tr.final.x[0] - math.exp(-1)))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.6 <= r <= 4.4 for r in ratios), ratios


def test_heun_matches_euler_reference_on_random_network(rng):
    spec = random_spec(rng)
    x0 = rng.uniform(0.1, 2.0, N_SPECIES)
    t_ref, x_ref = euler_reference(spec, x0, 5.0, dt=1e-6, sample_dt=0.5)
    tr = simulate(spec, State(x0), StepControl(1e-3, 5.0, 500))
    assert np.allclose(tr.t, t_ref)
    scale = np.maximum(np.abs(x_ref).max(axis=0), 1e-12)
    assert np.max(np.abs(tr.x - x_ref) / scale) < 1e-3


def test_bolus_is_exact_and_local(rng):
    spec = random_spec(rng)
    x0 = rng.uniform(0.1, 2.0, N_SPECIES)
    tr = simulate(spec, State(x0), StepControl(1e-3, 2.0), [bolus("th1", 0.7654, 1.25)])
    before, after = tr.at(0.7654, "left"), tr.at(0.7654, "right")
    jump = after - before
    assert jump[TH1] == pytest.approx(1.25, abs=1e-12)
    assert np.all(np.delete(jump, TH1) == 0)
    assert tr.events[0].time == 0.7654


def test_infusion_touches_only_its_species(rng):
    spec = random_spec(rng)
    x = rng.uniform(0.1, 2.0, N_SPECIES)
    inflow = np.zeros(N_SPECIES)
    inflow[CYT_B] = 3.0
    diff = rhs(spec, x, inflow) - rhs(spec, x)
    assert diff[CYT_B] == pytest.approx(3.0)
    assert np.all(np.delete(diff, CYT_B) == 0)


def test_blockade_window_closed_form():
    d = np.ones(N_SPECIES)
    x = np.zeros(N_SPECIES)
    x[CYT_B] = 2.0
    beta, t1, t2, T = 1.5, 0.4, 1.1, 2.0
    tr = simulate(decay_spec(d), State(x), StepControl(1e-4, T), [blockade("cyt_b", t1, beta, t2 - t1)])
    want = 2.0 * math.exp(-1.0 * T - beta * (t2 - t1))
    assert tr.final.x[CYT_B] == pytest.approx(want, rel=1e-6)


def test_unsorted_events_rejected():
    with pytest.raises(EventError):
        simulate(decay_spec(), State(np.ones(N_SPECIES)), StepControl(1e-3, 5.0),
                 [bolus("th1", 2.0, 1.0), bolus("th1", 1.0, 1.0)])


def test_event_outside_horizon_rejected():
    with pytest.raises(EventError):
        simulate(decay_spec(), State(np.ones(N_SPECIES)), StepControl(1e-3, 1.0), [bolus("th1", 2.0, 1.0)])


def test_divergence_names_species():
    from idnet.model import NetworkSpec

    w = np.zeros((N_SPECIES, N_SPECIES))
    w[ANTI_ID, TH1] = 1.0
    d = np.full(N_SPECIES, 1e-3)
    spec = NetworkSpec(w=w, w1=w * 0, w2=w * 0, d=d, source=np.zeros(N_SPECIES))
    x = np.zeros(N_SPECIES)
    x[ANTI_ID] = 1.0
    x[TH1] = 1e3
    with pytest.raises(DivergenceError) as exc:
        simulate(spec, State(x), StepControl(1e-2, 50.0))
    assert exc.value.species == "anti_id"


def test_determinism_bitwise(rng):
    spec = random_spec(rng)
    x0 = rng.uniform(0.1, 2.0, N_SPECIES)
    ev = [bolus("antigen", 1.0, 3.0), infusion("cyt_c", 1.5, 2.0, 1.0)]
    a = simulate(spec, State(x0), StepControl(1e-3, 4.0), ev)
    b = simulate(spec, State(x0), StepControl(1e-3, 4.0), ev)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.t.tobytes() == b.t.tobytes()


def test_csv_round_trip(tmp_path, rng):
    spec = random_spec(rng)
    tr = simulate(spec, State(rng.uniform(0.1, 2, N_SPECIES)), StepControl(1e-3, 1.0, 50),
                  [bolus("th2", 0.5, 1.0)])
    tr.write_csv(tmp_path / "t.csv")
    tr.write_events_csv(tmp_path / "e.csv")
    back = Trajectory.read_csv(tmp_path / "t.csv")
    assert back.names == tr.names
    assert np.array_equal(back.x, tr.x)
    assert (tmp_path / "t.csv").read_text().splitlines()[0].startswith("t,naive,th1")
    assert (tmp_path / "e.csv").read_text().splitlines()[1].startswith("0.5,bolus,th2,1.0")
