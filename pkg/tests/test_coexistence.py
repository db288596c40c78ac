import math

import numpy as np
import pytest

from invader_replicator.coexistence import (
    closed_form_prob,
    coexistence_distribution,
    expected_n_curve,
    integrand,
    prob_k_integral,
    prob_k_ode_ensemble,
    prob_k_ordered_oracle,
)
from invader_replicator.equilibrium import support_sizes
from invader_replicator.errors import PreconditionError, ValidationError

LN2 = math.log(2)


def test_closed_forms_exact_values():
    assert closed_form_prob(3, 2) == pytest.approx(2 - 2 * LN2)
    assert closed_form_prob(3, 2) + closed_form_prob(3, 3) == pytest.approx(1.0)
    assert closed_form_prob(7, 3) is None
    assert closed_form_prob(4, 3, with_source=True)[1] == "tabulated percentage"


def test_tabulated_n4_consistent_with_exact_k2():
    # P(4,3) + P(4,4) = 1 - P(4,2) up to the rounding of the printed percentages
    s = closed_form_prob(4, 3) + closed_form_prob(4, 4)
    assert s == pytest.approx(1 - closed_form_prob(4, 2), abs=2e-4)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_integral_matches_exact(N):
    est = prob_k_integral(N, 2, samples=2**17, seed=1)
    exact = closed_form_prob(N, 2)
    assert abs(est.value - exact) < 4 * est.std_error + 1e-4


def test_integral_matches_plain_monte_carlo():
    # independent oracle: draw pools and apply the threshold rule
    pools = 1.0 - np.random.default_rng(99).random((200_000, 6))
    k, _ = support_sizes(pools)
    for kk in (2, 3, 4):
        mc = np.mean(k == kk)
        se = math.sqrt(mc * (1 - mc) / k.size)
        est = prob_k_integral(6, kk, samples=2**17, seed=3)
        assert abs(est.value - mc) < 4 * math.hypot(se, est.std_error)


def test_oracle_agrees_with_integral():
    a = prob_k_integral(5, 3, samples=2**17, seed=0)
    b = prob_k_ordered_oracle(5, 3, samples=2**17, seed=0)
    assert abs(a.value - b.value) < 4 * math.hypot(a.std_error, b.std_error)


def test_oracle_size_limit():
    with pytest.raises(PreconditionError):
        prob_k_ordered_oracle(9, 3, samples=1000)


def test_integral_deterministic_and_job_independent():
    a = prob_k_integral(8, 4, samples=2**17, seed=5, jobs=1)
    b = prob_k_integral(8, 4, samples=2**17, seed=5, jobs=2)
    assert a.value == b.value and a.std_error == b.std_error


@pytest.mark.parametrize("proposal", ["beta", "uniform"])
def test_alternative_proposals_unbiased(proposal):
    a = prob_k_integral(5, 3, samples=2**17, seed=0, proposal=proposal)
    exact = closed_form_prob(5, 3)
    assert abs(a.value - exact) < 4 * a.std_error + 1e-3


def test_bad_arguments():
    with pytest.raises((PreconditionError, ValidationError)):
        prob_k_integral(5, 1)
    with pytest.raises((PreconditionError, ValidationError)):
        prob_k_integral(5, 6)
    with pytest.raises((PreconditionError, ValidationError)):
        prob_k_integral(5, 3, samples=10)


def test_integrand_zero_outside_simplex():
    u = np.array([[0.6, 0.6], [0.1, 0.2]])
    v = integrand(u, 4, 2)
    assert v[0] == 0.0 and v[1] > 0


def test_distribution_sums_to_one():
    d = coexistence_distribution(6, samples=2**16, seed=1)
    assert d.total() == pytest.approx(1.0, abs=5 * d.combined_se() + 1e-3)


def test_ode_ensemble_small():
    d = prob_k_ode_ensemble(4, runs=100, seed=2)
    assert d.agreement >= 0.97
    assert sum(p.value for p in d.pmf.values()) == pytest.approx(1.0)


def test_expected_n_curve_values():
    out = dict(expected_n_curve([3, 50], runs=2000, seed=0))
    assert out[3] == pytest.approx(2.386, abs=0.05)
    assert out[50] == pytest.approx(10.0, rel=0.06)
