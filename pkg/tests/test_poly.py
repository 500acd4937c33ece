import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e

from ptf_prg.poly import (
    DEGREE_CAP,
    HERMITE,
    STANDARD,
    Poly,
    PolyError,
    derivative,
    dumps,
    eval_many,
    eval_poly,
    exact_l2_norm,
    factorial_of,
    gradient_spectrum,
    hermite_table,
    hermite_univariate,
    hypercontractive_qnorm_bound,
    loads,
    multi_indices,
    noise_operator,
    poly_from_json,
    to_hermite,
    to_standard,
)


def random_poly(rng, n, d, basis=HERMITE, terms=None):
    alphas = multi_indices(n, d)
    if terms is not None:
        idx = rng.choice(len(alphas), size=min(terms, len(alphas)), replace=False)
        alphas = [alphas[i] for i in sorted(idx)]
    return Poly.from_dict(n, d, basis, {a: rng.normal() for a in alphas})


# -- univariate Hermite ------------------------------------------------------


def test_hermite_univariate_examples():
    assert hermite_univariate(0, 7.3) == 1.0
    assert hermite_univariate(1, 3.0) == 3.0
    assert hermite_univariate(2, 0.0) == pytest.approx(-1 / math.sqrt(2), abs=1e-15)


@pytest.mark.parametrize("m", range(0, 17))
def test_hermite_matches_numpy_hermeval(m):
    t = np.linspace(-4, 4, 41)
    coef = np.zeros(m + 1)
    coef[m] = 1.0
    expected = hermite_e.hermeval(t, coef) / math.sqrt(math.factorial(m))
    got = np.array([hermite_univariate(m, v) for v in t])
    np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(hermite_table(t, m)[:, m], expected, rtol=1e-10, atol=1e-10)


def test_generating_function_coefficients():
    # exp(st - s^2/2) = sum_m He_m(t) s^m / m!
    t, s = 0.7, 0.05
    series = sum(hermite_univariate(m, t) / math.sqrt(math.factorial(m)) * s**m for m in range(17))
    assert series == pytest.approx(math.exp(s * t - s * s / 2), rel=1e-14)


# -- construction and evaluation --------------------------------------------


def test_canonical_form_drops_zeros_and_sorts():
    p = Poly.from_dict(2, 2, HERMITE, {(1, 0): 1.0, (0, 0): 0.0, (0, 1): 2.0})
    assert p.terms == (((0, 1), 2.0), ((1, 0), 1.0))


@pytest.mark.parametrize("bad", [
    dict(n=2, d=1, basis=HERMITE, terms=(((2, 0), 1.0),)),
    dict(n=2, d=2, basis=HERMITE, terms=(((1,), 1.0),)),
    dict(n=1, d=1, basis=HERMITE, terms=(((0,), 0.0),)),
    dict(n=1, d=17, basis=HERMITE, terms=()),
    dict(n=1, d=1, basis="chebyshev", terms=()),
    dict(n=2, d=2, basis=HERMITE, terms=(((1, 0), 1.0), ((0, 1), 1.0))),
])
def test_invalid_polys_rejected(bad):
    with pytest.raises(PolyError):
        Poly(**bad)


def test_eval_examples():
    assert eval_poly(Poly.monomial((1, 0)), [3, -1]) == 3.0
    assert eval_poly(Poly.constant(2, 2.0), [0.3, 9.0]) == 2.0
    assert eval_poly(Poly.monomial((2, 0)), [1, 0]) == pytest.approx(0.0, abs=1e-15)


def test_eval_dimension_mismatch():
    with pytest.raises(PolyError):
        eval_poly(Poly.monomial((1, 0)), [1.0, 2.0, 3.0])


def test_eval_standard_basis():
    p = Poly.from_dict(2, 3, STANDARD, {(2, 1): 2.0, (0, 0): -1.0})
    assert eval_poly(p, [1.5, -2.0]) == pytest.approx(2 * 2.25 * -2 - 1)


# -- basis change --------------------------------------------------------------


def test_h2_to_standard():
    q = to_standard(Poly.monomial((2,)))
    assert q.basis == STANDARD
    assert q.coeff((2,)) == pytest.approx(1 / math.sqrt(2))
    assert q.coeff((0,)) == pytest.approx(-1 / math.sqrt(2))
    assert len(q.terms) == 2


def test_constant_same_in_both_bases():
    p = Poly.constant(3, -4.5)
    assert to_standard(p).terms == p.terms
    assert to_hermite(to_standard(p)).terms == p.terms


def test_multilinear_identical_in_both_bases():
    rng = np.random.default_rng(3)
    coeffs = {a: rng.normal() for a in itertools.product((0, 1), repeat=4)}
    p = Poly.from_dict(4, 4, HERMITE, coeffs)
    q = to_standard(p)
    assert q.alphas == p.alphas
    np.testing.assert_allclose(q.values, p.values, rtol=0, atol=0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), d=st.integers(0, DEGREE_CAP))
def test_basis_round_trip(seed, n, d):
    rng = np.random.default_rng(seed)
    p = random_poly(rng, n, d, terms=6)
    r = to_hermite(to_standard(p))
    assert r.alphas == p.alphas
    np.testing.assert_allclose(r.values, p.values, rtol=1e-9, atol=0)


def test_top_degree_univariate_round_trip():
    p = Poly.from_dict(1, 16, HERMITE, {(m,): 1.0 for m in range(17)})
    r = to_hermite(to_standard(p))
    assert r.alphas == p.alphas
    np.testing.assert_allclose(r.values, p.values, rtol=1e-9)


def test_conversion_preserves_values():
    rng = np.random.default_rng(11)
    p = random_poly(rng, 3, 6, terms=10)
    X = rng.normal(size=(50, 3))
    np.testing.assert_allclose(eval_many(to_standard(p), X), eval_many(p, X), rtol=1e-10, atol=1e-10)


# -- orthonormality ------------------------------------------------------------


def test_orthonormality_by_quadrature():
    # independent oracle: numpy's Gauss-HermiteE rule, 8 nodes per axis is exact to degree 15
    nodes, weights = hermite_e.hermegauss(8)
    weights = weights / weights.sum()
    for n in (1, 2, 3):
        grid = np.array(list(itertools.product(nodes, repeat=n)))
        w = np.prod(np.array(list(itertools.product(weights, repeat=n))), axis=1)
        alphas = multi_indices(n, 4)
        B = np.column_stack([eval_many(Poly.monomial(a), grid) for a in alphas])
        gram = B.T @ (w[:, None] * B)
        np.testing.assert_allclose(gram, np.eye(len(alphas)), atol=1e-10)


# -- derivatives ---------------------------------------------------------------


def test_derivative_examples():
    assert derivative(Poly.monomial((1,)), (1,)).terms == (((0,), 1.0),)
    d = derivative(Poly.monomial((2,)), (1,))
    assert d.alphas == [(1,)] and d.values[0] == pytest.approx(math.sqrt(2))
    assert derivative(Poly.monomial((1,)), (2,)).is_zero()


def test_multivariate_derivative_uses_beta_factorials():
    # d^alpha h_beta = sqrt(beta!/gamma!) h_gamma with gamma = beta - alpha
    p = Poly.monomial((3, 2))
    d = derivative(p, (1, 1))
    assert d.alphas == [(2, 1)]
    assert d.values[0] == pytest.approx(math.sqrt(factorial_of((3, 2)) / factorial_of((2, 1))))
    # the alternative sqrt(alpha!/gamma!) differs here and fails finite differences
    assert d.values[0] != pytest.approx(math.sqrt(factorial_of((1, 1)) / factorial_of((2, 1))))


@pytest.mark.parametrize("seed", range(25))
def test_derivative_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(1, 5), rng.integers(1, 6)
    p = random_poly(rng, n, d, terms=8)
    x = rng.normal(size=n)
    h = 1e-5
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        alpha = tuple(int(v) for v in e)
        exact = eval_poly(derivative(p, alpha), x)
        fd = (eval_poly(p, x + h * e) - eval_poly(p, x - h * e)) / (2 * h)
        scale = max(abs(exact), np.sum(np.abs(p.values)) * 1e-3)
        assert abs(exact - fd) <= 1e-5 * scale


def test_standard_basis_derivative():
    p = Poly.from_dict(2, 3, STANDARD, {(3, 0): 1.0, (1, 1): 2.0})
    d = derivative(p, (1, 0))
    assert d.coeffs == {(2, 0): 3.0, (0, 1): 2.0}


# -- gradient spectrum ------------------------------------------------------------


def test_gradient_spectrum_examples():
    cube = Poly.from_dict(2, 3, STANDARD, {(3, 0): 1.0})
    np.testing.assert_allclose(gradient_spectrum(cube, [2.0, 0.4]), [8, 12, 12, 6])
    const = Poly.constant(2, -3.0, d=2)
    np.testing.assert_allclose(gradient_spectrum(const, [1.0, 1.0]), [3, 0, 0])
    lin = Poly.from_dict(2, 1, STANDARD, {(1, 0): 1.0, (0, 1): 1.0})
    assert gradient_spectrum(lin, [0.3, -7.0])[1] == pytest.approx(math.sqrt(2))


def test_gradient_spectrum_same_in_both_bases():
    rng = np.random.default_rng(5)
    p = random_poly(rng, 3, 4, terms=12)
    x = rng.normal(size=3)
    np.testing.assert_allclose(gradient_spectrum(p, x), gradient_spectrum(to_standard(p), x), rtol=1e-10)


def test_gradient_spectrum_by_explicit_derivatives():
    rng = np.random.default_rng(6)
    p = random_poly(rng, 2, 4)
    x = rng.normal(size=2)
    spec = gradient_spectrum(p, x)
    for k in range(5):
        direct = math.sqrt(sum(eval_poly(derivative(p, a), x) ** 2 for a in multi_indices(2, k, exact=k)))
        assert spec[k] == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_gradient_spectrum_dimension_mismatch():
    with pytest.raises(PolyError):
        gradient_spectrum(Poly.monomial((1, 0)), [1.0])


# -- noise operator and norms ------------------------------------------------------


def test_noise_operator_examples():
    rng = np.random.default_rng(1)
    p = random_poly(rng, 2, 3)
    assert noise_operator(p, 1.0).terms == p.terms
    z = noise_operator(p, 0.0)
    assert z.alphas == [(0, 0)] and z.values[0] == p.coeff((0, 0))
    q = noise_operator(Poly.monomial((2, 1)), 2.0)
    assert q.coeffs == {(2, 1): 8.0}


@pytest.mark.parametrize("rho", [0.3, 0.7])
def test_noise_operator_is_gaussian_smoothing(rho):
    rng = np.random.default_rng(int(rho * 10))
    p = random_poly(rng, 3, 3)
    x = rng.normal(size=3)
    Z = rng.normal(size=(1_000_000, 3))
    samples = eval_many(p, rho * x + math.sqrt(1 - rho * rho) * Z)
    se = samples.std() / math.sqrt(len(samples))
    assert abs(eval_poly(noise_operator(p, rho), x) - samples.mean()) <= 3 * se


def test_exact_l2_norm_examples():
    assert exact_l2_norm(Poly.monomial((1, 1))) == 1.0
    p = Poly.from_dict(2, 1, HERMITE, {(0, 0): 3.0, (1, 0): 4.0})
    assert exact_l2_norm(p) == 5.0
    assert exact_l2_norm(Poly(2, 1, HERMITE, ())) == 0.0
    with pytest.raises(PolyError):
        exact_l2_norm(to_standard(p))


def test_exact_l2_norm_against_monte_carlo():
    rng = np.random.default_rng(8)
    p = random_poly(rng, 3, 3)
    v = eval_many(p, rng.normal(size=(1_000_000, 3))) ** 2
    m, se = v.mean(), v.std() / math.sqrt(len(v))
    # delta method for the square root
    assert abs(exact_l2_norm(p) - math.sqrt(m)) <= 3 * se / (2 * math.sqrt(m))


def test_hypercontractive_bound_examples():
    rng = np.random.default_rng(2)
    p = random_poly(rng, 2, 3)
    assert hypercontractive_qnorm_bound(p, 2) == pytest.approx(exact_l2_norm(p))
    assert hypercontractive_qnorm_bound(Poly.constant(2, -1.5), 8) == 1.5
    assert hypercontractive_qnorm_bound(Poly.monomial((1,), 0.5), 4) == pytest.approx(0.5 * math.sqrt(3))
    for q in (1, 3, 0):
        with pytest.raises(PolyError):
            hypercontractive_qnorm_bound(p, q)


def test_hypercontractive_bound_dominates_q_norm():
    rng = np.random.default_rng(4)
    p = random_poly(rng, 2, 2)
    v = eval_many(p, rng.normal(size=(400_000, 2)))
    assert np.mean(v**4) ** 0.25 <= hypercontractive_qnorm_bound(p, 4)


# -- JSON ----------------------------------------------------------------------


def test_json_round_trip():
    rng = np.random.default_rng(9)
    p = random_poly(rng, 3, 3, terms=7)
    assert loads(dumps(p)) == p


@pytest.mark.parametrize("obj", [
    {"n": 1, "d": 2, "basis": "hermite", "terms": [{"alpha": [2], "c": 1.0}, {"alpha": [1], "c": 1.0}]},
    {"n": 1, "d": 2, "basis": "hermite", "terms": [{"alpha": [1], "c": 1.0}, {"alpha": [1], "c": 2.0}]},
    {"n": 1, "d": 2, "basis": "legendre", "terms": []},
    {"n": 1, "basis": "hermite", "terms": []},
    {"n": 1, "d": 1, "basis": "hermite", "terms": [{"alpha": [1]}]},
])
def test_json_rejects_malformed(obj):
    with pytest.raises(PolyError):
        poly_from_json(json.dumps(obj))


def test_finite_differences_reject_alpha_factorial_form():
    p = Poly.monomial((3, 1))
    x = np.array([0.8, -1.3])
    h = 1e-5
    fd = (eval_poly(p, x + [h, 0]) - eval_poly(p, x - [h, 0])) / (2 * h)
    gamma_term = eval_poly(Poly.monomial((2, 1)), x)
    assert fd == pytest.approx(math.sqrt(3) * gamma_term, rel=1e-8)
    assert fd != pytest.approx(math.sqrt(1 / factorial_of((2, 1))) * gamma_term, rel=1e-2)
