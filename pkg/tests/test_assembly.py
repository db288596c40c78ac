import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invader_replicator.assembly import (
    assemble_sequence,
    augmentation_chain,
    classify_invader,
    invasion_thresholds,
    matching_intervals,
    ode_invasion_check,
    random_invaders,
    saturation_gap,
)
from invader_replicator.equilibrium import select_support
from invader_replicator.errors import DegenerateThresholdError, PreconditionError

LAM = [1.0, 0.674, 0.536, 0.342]


def test_rejection_below_q_star():
    eq = select_support(LAM)
    out = classify_invader(eq, 0.3)
    assert out.kind == "rejection" and out.removed == ()
    assert out.new_equilibrium is eq


def test_augmentation_less_fit():
    eq = select_support(LAM)
    out = classify_invader(eq, 0.5)
    assert out.kind == "augmentation_less_fit"
    assert out.new_equilibrium.k == 4


def test_augmentation_fitter_and_replacement():
    eq = select_support([1.0, 0.9])
    th = invasion_thresholds([1.0, 0.9])
    x = 0.5 * (th["lambda_k"] + min(th["U_k"], 5.0))
    out = classify_invader(eq, x)
    assert out.kind == "augmentation_fitter"
    big = classify_invader(eq, 50.0)
    assert big.kind.startswith("replacement")
    assert big.removed


@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=8), st.floats(0.01, 3.0))
def test_classifier_matches_threshold_rule(lam, x):
    try:
        eq = select_support(lam)
        out = classify_invader(eq, x, cross_check=True)
    except DegenerateThresholdError:
        return
    assert len(matching_intervals(out.thresholds, x)) == 1
    if out.kind != "rejection":
        assert out.invader_id in out.new_equilibrium.support


def test_degenerate_invader_raises():
    eq = select_support(LAM)
    with pytest.raises(DegenerateThresholdError):
        classify_invader(eq, eq.q_star)


def test_invalid_invader():
    with pytest.raises(PreconditionError):
        classify_invader(select_support(LAM), -0.1)


def test_ode_agrees_with_augmentation():
    eq = select_support(LAM)
    assert len(ode_invasion_check(eq, 0.5)) == 4
    assert "invader" not in ode_invasion_check(eq, 0.3)


def test_assembly_q_star_non_decreasing():
    log = assemble_sequence(None, random_invaders(200, seed=1), cross_check=True)
    q = log.q_series()
    assert np.all(np.diff(q) >= -1e-12)
    assert log.steps[0].outcome == "founder"
    assert sum(log.counts.values()) == 200


def test_augmentation_chain_grows_community():
    lam = augmentation_chain([1.0, 0.8], steps=5)
    eq = select_support(lam)
    assert eq.k == len(lam)


def test_saturation_gap_shrinks():
    lam = np.sort(1.0 - np.random.default_rng(0).random(30))[::-1]
    gaps = [g for _, g in saturation_gap(lam, range(2, 8))]
    assert all(np.isfinite(gaps))
