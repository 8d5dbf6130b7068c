from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from app.lccore import (
    BasisExpansion,
    CallableExpFamilyModel,
    GaussianMeasurementModel,
    JlfStatistic,
    LayoutMismatch,
    PolynomialBasis,
    evaluate_basis,
    eval_log_jlf,
    exact_sufficient_statistic,
    exp_family_eta,
    fit_alpha,
    gamma_direct,
    gamma_indirect_gaussian,
    local_beta,
    local_general_terms,
    log_norm_const,
    payload_size,
    statistic_from_payload,
    sum_local_statistics,
)

SIGMA2 = 0.05


def _scalar_model(h) -> GaussianMeasurementModel:
    return GaussianMeasurementModel(h, np.array([[SIGMA2]]))


def test_gaussian_exp_family_identity(rng):
    model = _scalar_model(lambda x: 3.0 + x[:, 0] - 0.5 * x[:, 1] ** 2)
    x = rng.normal(size=(20, 2))
    z = np.array([2.7])
    via_family = model.log_c(z) + model.a(x) @ model.b(z) - model.d(x)
    direct = stats.norm.logpdf(z[0], loc=model.mean(x)[:, 0], scale=math.sqrt(SIGMA2))
    np.testing.assert_allclose(via_family, direct, atol=1e-10)
    np.testing.assert_allclose(model.log_likelihood(z, x), direct, atol=1e-10)


def test_gaussian_density_integrates_to_one():
    model = _scalar_model(lambda x: 1.5 + x[:, 0])
    x = np.array([[0.2]])
    f = lambda z: math.exp(model.log_c(np.array([z])) + float(model.a(x)[0] @ model.b(np.array([z]))) - float(model.d(x)[0]))
    total, _ = integrate.quad(f, -20.0, 20.0)
    assert abs(total - 1.0) < 1e-8


def test_gaussian_model_rejects_bad_covariance():
    with pytest.raises(ValueError):
        GaussianMeasurementModel(lambda x: x[:, 0], np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_fit_alpha_constant_and_square(rng):
    basis = PolynomialBasis.create(2, 2)
    pts = rng.uniform(-1, 1, size=(30, 2))
    alpha = fit_alpha(_scalar_model(lambda x: np.full(x.shape[0], 10.0)), basis, pts)
    expect = np.zeros(len(basis))
    expect[0] = 10.0
    np.testing.assert_allclose(alpha.coeffs[:, 0], expect, atol=1e-10)
    alpha = fit_alpha(_scalar_model(lambda x: x[:, 0] ** 2), basis, pts)
    unit = np.zeros(len(basis))
    unit[basis.indices.index(next(r for r in basis.indices if r.exponents == (2, 0)))] = 1.0
    np.testing.assert_allclose(alpha.coeffs[:, 0], unit, atol=1e-10)


def test_fit_alpha_select_uses_subset_of_state(rng):
    basis = PolynomialBasis.create(1, 1)
    pts = rng.normal(size=(12, 3))
    alpha = fit_alpha(_scalar_model(lambda x: 2.0 * x[:, 2] + 1.0), basis, pts, select=[2])
    np.testing.assert_allclose(alpha.coeffs[:, 0], [1.0, 2.0], atol=1e-10)


def test_gamma_direct_cases(rng):
    psi = PolynomialBasis.create(2, 2)
    pts = rng.uniform(-1, 1, size=(40, 2))
    zero = CallableExpFamilyModel(1, lambda x: x[:, :1], lambda z: z, lambda z: 0.0, lambda x: np.zeros(x.shape[0]))
    np.testing.assert_allclose(gamma_direct(zero, psi, pts).coeffs, 0.0, atol=1e-12)
    third = CallableExpFamilyModel(1, lambda x: x[:, :1], lambda z: z, lambda z: 0.0,
                                   lambda x: evaluate_basis(psi, x)[:, 3])
    np.testing.assert_allclose(gamma_direct(third, psi, pts).coeffs[:, 0], np.eye(len(psi))[3], atol=1e-10)


def test_gamma_direct_matches_gaussian_d(rng):
    model = _scalar_model(lambda x: 1.0 + x[:, 0] * x[:, 1])
    psi = PolynomialBasis.create(2, 4)
    gamma = gamma_direct(model, psi, rng.uniform(-2, 2, size=(200, 2)))
    x = rng.uniform(-2, 2, size=(50, 2))
    np.testing.assert_allclose(gamma(x)[:, 0], model.d(x), rtol=1e-8, atol=1e-8)


def test_gamma_indirect_constant_and_zero():
    phi = PolynomialBasis.create(2, 2)
    c = np.zeros((len(phi), 1))
    c[0] = 3.0
    gamma = gamma_indirect_gaussian(BasisExpansion(phi, c), np.array([[1.0 / SIGMA2]]))
    assert len(gamma.basis) == 15
    expect = np.zeros(15)
    expect[0] = 9.0 / (2.0 * SIGMA2)
    np.testing.assert_allclose(gamma.coeffs[:, 0], expect)
    zero = gamma_indirect_gaussian(BasisExpansion(phi, np.zeros((len(phi), 1))), np.array([[1.0 / SIGMA2]]))
    np.testing.assert_array_equal(zero.coeffs, 0.0)


@pytest.mark.parametrize("M,R", [(2, 2), (4, 2), (3, 1)])
def test_gamma_indirect_is_half_quadratic_form(rng, M, R):
    phi = PolynomialBasis.create(M, R)
    q = 2
    alpha = BasisExpansion(phi, rng.normal(size=(len(phi), q)))
    A = rng.normal(size=(q, q))
    Q_inv = A @ A.T + np.eye(q)
    gamma = gamma_indirect_gaussian(alpha, Q_inv)
    x = rng.uniform(-1, 1, size=(100, M))
    a = alpha(x)
    expect = 0.5 * np.einsum("ji,ik,jk->j", a, Q_inv, a)
    np.testing.assert_allclose(gamma(x)[:, 0], expect, atol=1e-10, rtol=1e-10)


def test_local_beta_cases():
    phi = PolynomialBasis.create(1, 1)
    psi = phi.with_degree(2)
    alpha = BasisExpansion(phi, np.array([[0.0], [1.0]]))
    gamma0 = BasisExpansion(psi, np.zeros(3))
    np.testing.assert_allclose(local_beta(np.array([4.0]), alpha, gamma0, lambda z: z), [0.0, 4.0, 0.0])
    gamma = BasisExpansion(psi, np.array([0.5, -1.0, 2.0]))
    np.testing.assert_allclose(local_beta(np.array([0.0]), alpha, gamma, lambda z: z), [-0.5, 1.0, -2.0])


def test_local_beta_reproduces_gaussian_log_term(rng):
    phi = PolynomialBasis.create(2, 2)
    alpha = BasisExpansion(phi, rng.normal(size=(len(phi), 1)))
    Q_inv = np.array([[1.0 / SIGMA2]])
    gamma = gamma_indirect_gaussian(alpha, Q_inv)
    z = np.array([1.3])
    beta = local_beta(z, alpha, gamma, lambda v: Q_inv @ v)
    x = rng.uniform(-1, 1, size=(100, 2))
    h = alpha(x)[:, 0]
    expect = h * z[0] / SIGMA2 - 0.5 * h * h / SIGMA2
    np.testing.assert_allclose(evaluate_basis(gamma.basis, x) @ beta, expect, atol=1e-10, rtol=1e-10)


def test_statistic_length_and_payload():
    phi = PolynomialBasis.create(4, 2)
    psi = phi.with_degree(4)
    stat = JlfStatistic.from_beta(psi, np.arange(70, dtype=float))
    assert stat.size == math.comb(8, 4) - 1 == 69
    assert stat.constant == 0.0
    assert payload_size(phi, psi) == 69
    assert payload_size(phi, psi, "general") == 15 + 70
    rebuilt = statistic_from_payload(stat, np.ones(69))
    np.testing.assert_array_equal(rebuilt.coeffs, 1.0)
    with pytest.raises(LayoutMismatch):
        statistic_from_payload(stat, np.ones(68))


def test_sum_local_statistics(rng):
    psi = PolynomialBasis.create(2, 2)
    beta = rng.normal(size=len(psi))
    one = JlfStatistic.from_beta(psi, beta)
    np.testing.assert_array_equal(sum_local_statistics([one]).coeffs, one.coeffs)
    zero = sum_local_statistics([one, JlfStatistic.from_beta(psi, -beta)])
    np.testing.assert_allclose(zero.coeffs, 0.0)
    other = JlfStatistic.from_beta(PolynomialBasis.create(2, 4), np.zeros(15))
    with pytest.raises(LayoutMismatch):
        sum_local_statistics([one, other])


def test_eval_log_jlf_zero_statistic(rng):
    psi = PolynomialBasis.create(2, 4)
    stat = JlfStatistic.from_beta(psi, np.zeros(len(psi)))
    np.testing.assert_array_equal(eval_log_jlf(stat, rng.normal(size=(5, 2))), 0.0)
    assert eval_log_jlf(stat, np.zeros(2)) == 0.0


def test_polynomial_sensors_give_exact_jlf_up_to_constant(rng):
    phi = PolynomialBasis.create(2, 2)
    psi = phi.with_degree(4)
    sensors = rng.uniform(-1, 1, size=(6, 2))
    models = [_scalar_model(lambda x, s=s: 1.0 + s[0] * x[:, 0] + s[1] * x[:, 1] ** 2 - x[:, 0] * x[:, 1])
              for s in sensors]
    pts = rng.uniform(-2, 2, size=(60, 2))
    z = rng.normal(size=6)
    local = []
    for m, zk in zip(models, z):
        alpha = fit_alpha(m, phi, pts)
        gamma = gamma_indirect_gaussian(alpha, m.Q_inv, psi)
        local.append(JlfStatistic.from_beta(psi, local_beta(np.array([zk]), alpha, gamma, m.b)))
    total = sum_local_statistics(local)
    x = rng.uniform(-2, 2, size=(100, 2))
    exact = sum(m.log_likelihood(np.array([zk]), x) for m, zk in zip(models, z))
    assert np.std(eval_log_jlf(total, x) - exact) < 1e-8


def test_general_statistic_matches_polynomial_one(rng):
    phi = PolynomialBasis.create(2, 2)
    psi = phi.with_degree(4)
    model = _scalar_model(lambda x: 2.0 + x[:, 0] - x[:, 1] ** 2)
    pts = rng.uniform(-1, 1, size=(80, 2))
    alpha = fit_alpha(model, phi, pts)
    gamma = gamma_indirect_gaussian(alpha, model.Q_inv, psi)
    z = np.array([0.4])
    general = local_general_terms(model, z, alpha, gamma)
    assert general.size == len(phi) + len(psi)
    poly = JlfStatistic.from_beta(psi, local_beta(z, alpha, gamma, model.b))
    x = rng.uniform(-1, 1, size=(30, 2))
    diff = eval_log_jlf(general, x) - eval_log_jlf(poly, x)
    assert np.std(diff) < 1e-9


def test_exact_sufficient_statistic():
    ident = [lambda z: z] * 3
    np.testing.assert_allclose(exact_sufficient_statistic(ident, [np.array([1.0]), np.array([2.0]), np.array([3.0])]), [6.0])
    np.testing.assert_allclose(exact_sufficient_statistic([lambda z: 2 * z], [np.array([1.5, 2.0])]), [3.0, 4.0])
    with pytest.raises(LayoutMismatch):
        exact_sufficient_statistic(ident, [np.array([1.0])])


def test_exact_statistic_equals_summed_general_terms(rng):
    phi = PolynomialBasis.create(1, 1)
    psi = phi.with_degree(2)
    models = [_scalar_model(lambda x, c=c: c + x[:, 0]) for c in (1.0, -2.0)]
    pts = rng.uniform(-1, 1, size=(10, 1))
    z = [np.array([0.5]), np.array([-0.3])]
    etas, terms = [], []
    for m, zk in zip(models, z):
        alpha = fit_alpha(m, phi, pts)
        gamma = gamma_indirect_gaussian(alpha, m.Q_inv, psi)
        etas.append(exp_family_eta(alpha, gamma, m.b))
        terms.append(local_general_terms(m, zk, alpha, gamma))
    t = exact_sufficient_statistic(etas, z)
    summed = sum_local_statistics(terms)
    n_a = len(phi)
    np.testing.assert_allclose(t[:n_a], summed.coeffs[:n_a], atol=1e-12)
    np.testing.assert_allclose(t[n_a:], -summed.coeffs[n_a:], atol=1e-12)


def test_log_norm_const():
    assert log_norm_const([0.0, 0.0]) == 0.0
    assert log_norm_const([-1.0, -2.0]) == -3.0
    z = np.array([0.3, -1.1, 2.0])
    model = _scalar_model(lambda x: x[:, 0])
    direct = -np.sum(0.5 * math.log(2 * math.pi * SIGMA2) + z * z / (2 * SIGMA2))
    np.testing.assert_allclose(log_norm_const([model.log_c(np.array([v])) for v in z]), direct, rtol=1e-12)
