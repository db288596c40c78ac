import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invader_replicator.equilibrium import (
    coexistence_equilibrium,
    enumerate_candidates,
    prefix_thresholds,
    q_star,
    select_support,
    support_sizes,
)
from invader_replicator.errors import DegenerateThresholdError, PreconditionError

pools = st.lists(st.floats(0.01, 1.0, allow_nan=False), min_size=2, max_size=10)


def test_fig3_pool():
    eq = select_support([1.0, 0.674, 0.536, 0.342])
    assert eq.k == 3
    assert eq.q_star == pytest.approx(0.459838703, abs=1e-9)
    np.testing.assert_allclose(eq.z_star[:3], 1 - eq.q_star / np.array([1.0, 0.674, 0.536]))


def test_two_species_always_coexist():
    eq = select_support([0.3, 0.9])
    assert eq.k == 2
    assert eq.q_star == pytest.approx(1 / (1 / 0.3 + 1 / 0.9))


def test_q_star_formula():
    assert q_star([1.0, 0.5, 0.25], [1, 2, 3]) == pytest.approx(2 / 7)


def test_prefix_thresholds_sign_change():
    q, d = prefix_thresholds(np.array([1.0, 0.674, 0.536, 0.342]))
    assert d[0] < 0 and d[1] < 0 and d[2] > 0


def test_degenerate_threshold_raises():
    # Q*_2 for (1, 1/2) equals 1/3; a third species at 1/3 sits on the threshold
    with pytest.raises(DegenerateThresholdError):
        select_support([1.0, 0.5, 1 / 3])


@pytest.mark.parametrize("bad", [[1.0], [1.0, -0.2], [1.0, 0.0]])
def test_preconditions(bad):
    with pytest.raises(PreconditionError):
        select_support(bad)


@given(pools)
def test_support_is_prefix_and_feasible(lam):
    try:
        eq = select_support(lam)
    except DegenerateThresholdError:
        return
    z = np.asarray(eq.z_star)
    assert np.all(z[: eq.k] > 0) and np.all(z[eq.k:] == 0)
    assert z.sum() == pytest.approx(1.0)
    vals = np.asarray(eq.lambdas)
    assert np.all(vals[eq.k:] < eq.q_star + 1e-12)


@given(pools)
def test_unique_stable_among_candidates(lam):
    try:
        eq = select_support(lam)
    except DegenerateThresholdError:
        return
    cands = enumerate_candidates(lam, fast=False)
    stable = [c for c in cands if c.feasible and c.verdict == "stable"]
    if any(c.verdict == "marginal" for c in cands):
        return
    assert len(stable) == 1
    assert set(stable[0].subset) == set(eq.support)


@given(pools, st.floats(0.01, 1.0))
def test_q_star_non_decreasing_when_adding(lam, x):
    try:
        a = select_support(lam)
        b = select_support(list(lam) + [x])
    except DegenerateThresholdError:
        return
    assert b.q_star >= a.q_star - 1e-12


def test_vectorized_support_sizes_match(rng):
    P = 1.0 - rng.random((500, 8))
    k, deg = support_sizes(P)
    assert not deg.any()
    assert all(select_support(p).k == kk for p, kk in zip(P, k))


def test_coexistence_equilibrium_drops_nonpositive():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eq = coexistence_equilibrium([0.9, 0.0, 0.5, -0.3])
    assert eq.z_star[eq.ids.index(3)] > 0
    assert eq.z_by_id()[2] == 0.0 and eq.z_by_id()[4] == 0.0


def test_enumerate_fast_sorted_by_bitmask():
    c = enumerate_candidates([1.0, 0.6, 0.2])
    assert [x.bitmask for x in c] == sorted(x.bitmask for x in c)
