import math

import numpy as np
import pytest

from oracles import naive_polynomial_value
from sphere_recovery import (
    KssPolynomial,
    enumerate_multiindices,
    evaluate,
    kernel_matrix,
    kernel_value,
    kss_variance,
    load_polynomial,
    make_circle_code,
    monomial_matrix,
    multiindex_count,
    sample_evaluations,
    sample_kss,
    save_polynomial,
)
from sphere_recovery.kss import MAX_MONOMIALS, coefficient_rows, sample_coefficient_block


def test_multiindex_count_values_and_binomial_identity():
    assert multiindex_count(1, 2) == 3
    assert multiindex_count(2, 30) == 496
    assert multiindex_count(8, 5) == 1287
    for n in range(1, 5):
        for d in range(0, 7):
            assert multiindex_count(n, d) == math.comb(n + d, n)


def test_enumerate_multiindices_is_lexicographic_and_complete():
    exps = enumerate_multiindices(2, 2)
    assert np.array_equal(exps, [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [2, 0]])
    exps = enumerate_multiindices(3, 4)
    assert exps.shape == (multiindex_count(3, 4), 3)
    assert exps.min() >= 0
    assert exps.sum(axis=1).max() <= 4
    as_tuples = [tuple(row) for row in exps]
    assert len(set(as_tuples)) == len(as_tuples)
    assert as_tuples == sorted(as_tuples)


def test_coefficient_variance_matches_scaled_multinomial():
    assert abs(kss_variance([1, 0], 2) - 0.5) < 1e-15
    for n in range(1, 4):
        for d in range(0, 7):
            for alpha in enumerate_multiindices(n, d):
                total = int(alpha.sum())
                exact = math.factorial(d) / (
                    math.factorial(d - total)
                    * math.prod(math.factorial(int(a)) for a in alpha)
                    * 2**d
                )
                assert abs(kss_variance(alpha, d) - exact) < 1e-14 * max(1.0, exact)
    with pytest.raises(ValueError):
        kss_variance([3, 0], 2)
    with pytest.raises(ValueError):
        kss_variance([-1, 1], 2)


def test_variances_sum_to_one_on_the_sphere():
    # sum_alpha Var(A_alpha) x^{2 alpha} = ((1 + ||x||^2)/2)^d = 1 for unit x
    rng = np.random.default_rng(7)
    for n, d in ((2, 5), (3, 4)):
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        exps = enumerate_multiindices(n, d)
        total = sum(
            kss_variance(alpha, d) * math.prod(float(xi) ** int(ai) for xi, ai in zip(x, alpha)) ** 2
            for alpha in exps
        )
        assert abs(total - 1.0) < 1e-12


def test_kernel_value_closed_form():
    x = np.array([1.0, 0.0])
    y = np.array([0.0, 1.0])
    assert abs(kernel_value(x, x, 7) - 1.0) < 1e-15
    assert abs(kernel_value(x, y, 1) - 0.5) < 1e-15
    assert abs(kernel_value(x, y, 3) - 0.125) < 1e-15
    assert kernel_value(x, -x, 5) == 0.0
    rng = np.random.default_rng(8)
    u = rng.standard_normal(5)
    v = rng.standard_normal(5)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    expected = ((1.0 + float(u @ v)) / 2.0) ** 9
    assert abs(kernel_value(u, v, 9) - expected) < 1e-14


def test_kernel_matrix_square_code_degree_one():
    K = kernel_matrix(make_circle_code(4), 1).entries
    expected = np.array(
        [
            [1.0, 0.5, 0.0, 0.5],
            [0.5, 1.0, 0.5, 0.0],
            [0.0, 0.5, 1.0, 0.5],
            [0.5, 0.0, 0.5, 1.0],
        ]
    )
    assert np.allclose(K, expected, atol=1e-15)


def test_kernel_matrix_is_positive_semidefinite():
    rng = np.random.default_rng(9)
    pts = rng.standard_normal((12, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    for d in (1, 4, 16):
        K = kernel_matrix(pts, d).entries
        assert np.allclose(K, K.T, atol=1e-15)
        assert np.linalg.eigvalsh(K).min() > -1e-12
        assert np.allclose(np.diag(K), 1.0, atol=1e-15)


def test_monomial_matrix_matches_naive_powers():
    rng = np.random.default_rng(10)
    n, d = 3, 4
    pts = rng.standard_normal((5, n))
    exps = enumerate_multiindices(n, d)
    mono = monomial_matrix(n, d, pts)
    assert mono.shape == (exps.shape[0], 5)
    for t, alpha in enumerate(exps):
        for p in range(5):
            expected = math.prod(float(pts[p, j]) ** int(alpha[j]) for j in range(n))
            assert abs(mono[t, p] - expected) < 1e-12 * max(1.0, abs(expected))


def test_monomial_matrix_enforces_coefficient_cap():
    # C(2 + 1000, 2) = 501501 exceeds the cap
    assert multiindex_count(2, 1000) > MAX_MONOMIALS
    with pytest.raises(ValueError):
        monomial_matrix(2, 1000, np.array([[1.0, 0.0]]))


def test_polynomial_evaluation_matches_naive_sum():
    rng = np.random.default_rng(11)
    polys = sample_kss(2, 4, 3, seed=21)
    for p in polys:
        for _ in range(4):
            x = rng.standard_normal(2)
            x /= np.linalg.norm(x)
            expected = naive_polynomial_value(p.exponents, p.coeffs, x)
            assert abs(evaluate(p, x) - expected) < 1e-12
            assert abs(p(x) - expected) < 1e-12


def test_coefficient_lookup():
    p = sample_kss(2, 3, 1, seed=4)[0]
    exps = enumerate_multiindices(2, 3)
    for i, alpha in enumerate(exps):
        assert p.coefficient(alpha) == p.coeffs[i]
    with pytest.raises(ValueError):
        p.coefficient([9, 9])


def test_sampling_is_deterministic_with_prefix_stability():
    a = sample_kss(2, 5, 4, seed=33)
    b = sample_kss(2, 5, 4, seed=33)
    longer = sample_kss(2, 5, 7, seed=33)
    for i in range(4):
        assert np.array_equal(a[i].coeffs, b[i].coeffs)
        assert np.array_equal(a[i].coeffs, longer[i].coeffs)
    other = sample_kss(2, 5, 4, seed=34)
    assert not np.array_equal(a[0].coeffs, other[0].coeffs)
    rows_small = coefficient_rows(2, 5, 3, 33)
    rows_large = coefficient_rows(2, 5, 6, 33)
    assert np.array_equal(rows_small, rows_large[:3])


def test_polynomial_constructor_validates_shapes():
    exps = enumerate_multiindices(2, 2)
    with pytest.raises(ValueError):
        KssPolynomial(2, 2, exps, np.zeros(exps.shape[0] - 1))
    with pytest.raises(ValueError):
        KssPolynomial(2, 2, exps[:-1], np.zeros(exps.shape[0] - 1))


def test_empirical_second_moment_is_one_on_the_sphere():
    rng = np.random.default_rng(12)
    n, d, M = 2, 6, 200_000
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    block = sample_coefficient_block(n, d, M, rng)
    vals = block @ monomial_matrix(n, d, x[None, :])[:, 0]
    second = float(np.mean(vals**2))
    se = math.sqrt(2.0 / M)  # Var(Z^2) = 2 for Z ~ N(0, 1)
    assert abs(second - 1.0) < 4.0 * se


def test_joint_distribution_depends_only_on_the_inner_product():
    # covariance of (P(x), P(y)) matches the kernel, before and after rotation
    rng = np.random.default_rng(13)
    d, M = 5, 200_000
    theta = 0.7
    x = np.array([1.0, 0.0])
    y = np.array([math.cos(theta), math.sin(theta)])
    rot = 1.1
    Q = np.array([[math.cos(rot), -math.sin(rot)], [math.sin(rot), math.cos(rot)]])
    k_xy = kernel_value(x, y, d)
    for pair in (np.vstack([x, y]), np.vstack([x @ Q.T, y @ Q.T])):
        block = sample_coefficient_block(2, d, M, rng)
        vals = block @ monomial_matrix(2, d, pair)
        cov = float(np.mean(vals[:, 0] * vals[:, 1]))
        var_prod = 1.0  # unit variances at both points
        se = math.sqrt((var_prod + k_xy**2) / M)
        assert abs(cov - k_xy) < 4.0 * se


def test_evaluation_space_sampler_matches_kernel_covariance():
    pts = make_circle_code(5).points
    d, M = 4, 120_000
    X = sample_evaluations(pts, d, M, seed=55)
    assert X.shape == (M, 5)
    assert np.array_equal(X, sample_evaluations(pts, d, M, seed=55))
    K = kernel_matrix(pts, d).entries
    emp = X.T @ X / M
    se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K**2) / M)
    assert np.all(np.abs(emp - K) < 4.0 * se)


def test_polynomial_file_roundtrip_is_exact(tmp_path):
    p = sample_kss(3, 4, 1, seed=77)[0]
    path = tmp_path / "poly.txt"
    save_polynomial(path, p)
    assert path.read_text().splitlines()[0] == "3 4"
    back = load_polynomial(path)
    assert back.n == p.n and back.d == p.d
    assert np.array_equal(back.exponents, p.exponents)
    assert np.array_equal(back.coeffs, p.coeffs)
