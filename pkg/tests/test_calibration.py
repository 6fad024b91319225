import numpy as np
import pytest

from idnet.calibration import (
    CalibrationError,
    Constraints,
    build,
    calibrate,
    center_of,
    sample,
    scorecard,
)
from idnet.formats import reference_spec
from idnet.equilibria import CertificateError
from idnet.model import ANTI_ID, CYT_B, validate_spec
from idnet.scenarios import builtin, run_scenario


def test_build_inverts_center_of():
    spec = reference_spec()
    c = Constraints()
    again = build(spec, c, center_of(spec, c))
    assert np.array_equal(again.w, spec.w) and np.array_equal(again.w1, spec.w1)
    assert np.array_equal(again.w2, spec.w2) and np.array_equal(again.d, spec.d)
    assert np.array_equal(again.source, spec.source) and np.array_equal(again.basal, spec.basal)


def test_groups_respect_ties():
    groups = Constraints().groups()
    sizes = sorted(len(g) for g in groups)
    assert sizes.count(2) == 4
    flat = [e for g in groups for e in g]
    assert len(flat) == len(set(flat))


def test_samples_stay_in_window_and_are_valid():
    spec = reference_spec()
    c = Constraints()
    mid = center_of(spec, c)
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = sample(rng, mid, 0.4)
        assert np.all(np.abs(np.log10(m / mid)) <= 0.2 + 1e-12)
        cand = build(spec, c, m)
        assert not [v for v in validate_spec(cand) if v.rule in ("sign", "forbidden", "tied")]


def test_sampling_is_seeded():
    mid = center_of(reference_spec(), Constraints())
    a = sample(np.random.default_rng(7), mid, 1.0)
    b = sample(np.random.default_rng(7), mid, 1.0)
    assert np.array_equal(a, b)


def test_flip_unknown_edge():
    with pytest.raises(KeyError):
        Constraints().flipped("w", 0, 0)


def test_zero_budget_fails():
    with pytest.raises(CalibrationError):
        calibrate(reference_spec(), seed=0, budget=0)
    with pytest.raises(ValueError):
        calibrate(reference_spec(), seed=0, budget=-1)


def test_reference_passes_its_scorecard():
    card = scorecard(reference_spec())
    assert len(card) == 12 and all(card.values()), card


def test_reference_meta_records_search():
    meta = reference_spec().meta
    assert {"seed", "candidate", "width"} <= set(meta)


def test_calibration_reproduces_reference():
    spec = reference_spec()
    meta = spec.meta
    res = calibrate(_center(), seed=meta["seed"], budget=meta["candidate"] + 1, width=meta["width"])
    assert res.candidate == meta["candidate"]
    assert np.array_equal(res.spec.w, spec.w) and np.array_equal(res.spec.w2, spec.w2)


def _center():
    from idnet.formats import load_spec
    from pathlib import Path

    return load_spec(Path(__file__).parent / "data" / "calibration_center.toml")


def test_flipped_cytb_antiid_sign_breaks_il4_paradox():
    # CytB activating AntiId: the search rejects it, and the same magnitudes lose the IL-4 block
    c = Constraints().flipped("w", ANTI_ID, CYT_B)
    with pytest.raises(CalibrationError) as exc:
        calibrate(_center(), seed=1, budget=3, width=0.1, constraints=c)
    assert exc.value.scorecard.get("valid") is False
    spec = reference_spec()
    flipped = build(spec, c, center_of(spec, Constraints()))
    assert flipped.w[ANTI_ID, CYT_B] > 0
    try:
        ok = run_scenario(builtin("antigen_plus_il4"), flipped).passed
    except (CertificateError, ArithmeticError):
        ok = False
    assert not ok
