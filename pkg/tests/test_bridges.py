import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invader_replicator.bridges import (
    SISTraits,
    fixed_point_correspondence,
    lambdas_from_sis_traits,
    lv_replicator_conjugacy_check,
    rank_report,
    sis_roundtrip_error,
    sis_traits_from_lambdas,
    susceptibility_symmetric,
    to_lotka_volterra,
    y_to_z,
    z_to_y,
)
from invader_replicator.errors import PreconditionError, ValidationError

pools = st.lists(st.floats(0.05, 1.0), min_size=2, max_size=8)


def test_two_species_lv_form():
    lv = to_lotka_volterra([0.9, 0.4], reference=2)
    # y' = y (l1 (1 - y) + (l1 - l2) y) = y (l1 - l2 y)
    y = 0.37
    assert lv.rhs(0, np.array([y]))[0] == pytest.approx(y * (0.9 * (1 - y) + (0.9 - 0.4) * y))


def test_equal_traits_give_logistic():
    lv = to_lotka_volterra([0.5, 0.5, 0.5])
    np.testing.assert_array_equal(lv.A, -0.5 * np.eye(2))


@given(pools)
def test_lv_structure_rank_one_after_diag_r(lam):
    lv = to_lotka_volterra(lam)
    rep = rank_report(lv)
    assert rep["shift_diag_r_ratio"] <= 1e-10
    c, ones, shift = lv.rank_one_decomposition
    np.testing.assert_allclose(np.outer(c, ones) + shift * np.eye(lv.dim) - np.diag(c), lv.A, atol=1e-15)


def test_simplex_map_roundtrip(rng):
    z = rng.dirichlet(np.ones(5))
    np.testing.assert_allclose(y_to_z(z_to_y(z, 2), 2), z, atol=1e-15)


@given(pools)
def test_fixed_points_correspond(lam):
    assert fixed_point_correspondence(lam)["max_error"] <= 1e-8


def test_conjugacy_orbits_overlap():
    rep = lv_replicator_conjugacy_check([1.0, 0.8, 0.6, 0.3], [0.1, 0.2, 0.3, 0.4], t_max=100)
    assert rep["max_discrepancy"] < 1e-3


@given(pools, st.floats(0.1, 5.0), st.floats(-1, 1))
def test_sis_case_ii_roundtrip(lam, mu, c):
    assert sis_roundtrip_error(lam, "ii", mu=mu, c=c) <= 1e-12


@given(pools, st.floats(-1, 1))
def test_sis_case_iii_roundtrip(lam, c):
    assert sis_roundtrip_error(lam, "iii", c=c) <= 1e-12


def test_sis_case_iii_nonsymmetric_variant(rng):
    lam = np.array([1.0, 0.7, 0.4])
    F = rng.normal(size=(3, 3))
    t = sis_traits_from_lambdas(lam, "iii", free_upper=F)
    assert not np.allclose(t.trait_matrix, t.trait_matrix.T)
    L = lambdas_from_sis_traits(t).values
    np.testing.assert_allclose(L, np.where(np.eye(3, dtype=bool), 0.0, lam[:, None]), atol=1e-12)


def test_sis_case_i_verification():
    d = np.array([0.2, -0.1, 0.3])
    alpha = d[:, None] + d[None, :]
    np.fill_diagonal(alpha, d)
    assert susceptibility_symmetric(alpha)
    L = lambdas_from_sis_traits(SISTraits("cocolonization_susceptibility", alpha, mu=2.0))
    off = ~np.eye(3, dtype=bool)
    np.testing.assert_allclose(L.values[off], np.repeat(d[:, None], 3, axis=1)[off], atol=1e-14)
    with pytest.raises(PreconditionError):
        sis_traits_from_lambdas([0.5, 0.3], "i", mu=1.0)


def test_sis_validation():
    with pytest.raises(ValidationError):
        SISTraits("cocolonization_interaction", np.zeros((2, 2)), mu=None)
    with pytest.raises(ValidationError):
        sis_traits_from_lambdas([0.5, 0.3], "bogus")
