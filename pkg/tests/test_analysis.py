import itertools
import math

import numpy as np
import pytest

from oracles import rip_by_svd
from sphere_recovery import (
    c0,
    candes_error_constant,
    concentration_bound,
    gershgorin_bounds,
    kernel_matrix,
    make_circle_code,
    mse_bound,
    mse_form,
    rip_constant,
    tau_star,
    theorem_b_min_degree,
    theorem_b_probability,
    theorem_b_sample_bound,
)
from sphere_recovery.analysis import DELTA_CRITICAL
from sphere_recovery.kss import sample_coefficient_block, monomial_matrix


def test_orthonormal_columns_have_zero_isometry_defect():
    report = rip_constant(np.eye(5), 3)
    assert report.delta_s <= 1e-12
    assert report.method == "exact-enumeration"


def test_duplicated_column_forces_defect_one():
    A = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    report = rip_constant(A, 2)
    assert abs(report.delta_s - 1.0) < 1e-12
    assert tuple(report.worst_subset) == (0, 1)


def test_isometry_constant_matches_singular_value_oracle():
    rng = np.random.default_rng(30)
    for _ in range(3):
        A = rng.standard_normal((6, 8)) / math.sqrt(6)
        for s in (1, 2, 3):
            report = rip_constant(A, s)
            assert report.method == "exact-enumeration"
            assert report.subsets_checked == math.comb(8, s)
            assert abs(report.delta_s - rip_by_svd(A, s)) <= 1e-10


def test_isometry_constant_is_monotone_in_sparsity():
    rng = np.random.default_rng(31)
    A = rng.standard_normal((8, 12)) / math.sqrt(8)
    deltas = [rip_constant(A, s).delta_s for s in (1, 2, 3, 4)]
    for lo, hi in zip(deltas, deltas[1:]):
        assert lo <= hi + 1e-12


def test_reported_worst_subset_attains_the_constant():
    rng = np.random.default_rng(32)
    A = rng.standard_normal((7, 10)) / math.sqrt(7)
    report = rip_constant(A, 3)
    sub = A[:, list(report.worst_subset)]
    gram = sub.T @ sub
    dev = float(np.abs(np.linalg.eigvalsh(gram) - 1.0).max())
    assert abs(dev - report.delta_s) < 1e-12


def test_sampled_fallback_is_a_lower_bound():
    rng = np.random.default_rng(33)
    A = rng.standard_normal((8, 16)) / math.sqrt(8)
    exact = rip_constant(A, 3)
    sampled = rip_constant(A, 3, enumeration_cap=100, sample_count=200, seed=1)
    assert sampled.method == "sampled-lower-bound"
    assert sampled.subsets_checked == 200
    assert sampled.delta_s <= exact.delta_s + 1e-12
    with pytest.raises(ValueError):
        rip_constant(A, 0)
    with pytest.raises(ValueError):
        rip_constant(A, 17)


def test_gershgorin_interval_closed_form():
    code = make_circle_code(12)
    lo, hi = gershgorin_bounds(code, [0, 4, 8], 4, alpha_override=0.0)
    assert abs(lo - 0.875) < 1e-15
    assert abs(hi - 1.125) < 1e-15
    assert gershgorin_bounds(code, [3], 10) == (1.0, 1.0)


def test_gershgorin_interval_contains_kernel_eigenvalues():
    rng = np.random.default_rng(34)
    for _ in range(20):
        N = int(rng.integers(8, 30))
        code = make_circle_code(N, offset=float(rng.uniform(0.0, 1.0)))
        k = int(rng.integers(2, 7))
        d = int(rng.integers(1, 40))
        subset = np.sort(rng.choice(N, size=k, replace=False))
        lo, hi = gershgorin_bounds(code, subset, d)
        eigs = np.linalg.eigvalsh(kernel_matrix(code.points[subset], d).entries)
        assert eigs.min() >= lo - 1e-10
        assert eigs.max() <= hi + 1e-10
        # the code-level coherence can only widen the interval
        lo_c, hi_c = gershgorin_bounds(code, subset, d, alpha_override=code.alpha)
        assert lo_c <= lo + 1e-12 and hi <= hi_c + 1e-12


def test_gershgorin_validates_input():
    code = make_circle_code(6)
    with pytest.raises(ValueError):
        gershgorin_bounds(code, [], 3)
    with pytest.raises(ValueError):
        gershgorin_bounds(code, [0, 0], 3)
    with pytest.raises(ValueError):
        gershgorin_bounds(code, [0, 6], 3)
    with pytest.raises(ValueError):
        gershgorin_bounds(code, [0, 1], -1)
    with pytest.raises(ValueError):
        gershgorin_bounds(code, [0, 1], 3, alpha_override=1.0)


def test_concentration_rate_picks_the_smaller_branch():
    upper = 0.05 - math.log(1.1) / 2.0
    lower = math.log(1.0 / 0.9) / 2.0 - 0.05
    assert abs(c0(0.1) - upper) < 1e-15
    assert upper < lower
    for eta in (0.05, 0.2, 0.5, 0.9):
        u = 0.5 * math.log(1.0 / (1.0 + eta)) + eta / 2.0
        lo = 0.5 * math.log(1.0 / (1.0 - eta)) - eta / 2.0
        assert abs(c0(eta) - min(u, lo)) < 1e-15
        assert c0(eta) > 0.0
    for eta in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            c0(eta)


def test_concentration_bound_value():
    val = concentration_bound(10_000, 0.1)
    assert abs(val - 2.0 * math.exp(-10_000 * c0(0.1))) == 0.0
    assert abs(val - 1.31e-10) / 1.31e-10 < 1e-2
    assert concentration_bound(0, 0.3) == 2.0
    assert concentration_bound(100, 0.3) < concentration_bound(50, 0.3)


def test_isometry_failure_probability_report():
    N, k, delta = 8, 1, 0.3
    for m in (0, 100, 5000):
        report = theorem_b_probability(N, k, m, delta)
        expected_log = (
            math.log(math.comb(N, 2 * k))
            + 2 * k * math.log(30.0 / delta)
            + math.log(2.0)
            - m * c0(delta / 6.0)
        )
        assert abs(report.log_value - expected_log) < 1e-12
        assert report.value == min(1.0, math.exp(min(expected_log, 0.0)))
    assert math.log(math.comb(8, 2)) == pytest.approx(math.log(28))
    assert theorem_b_probability(N, k, 0, delta).value == 1.0
    # the log of the bound falls linearly in m; the clamp releases once it
    # crosses zero and the value then decreases strictly
    assert (
        theorem_b_probability(N, k, 4000, delta).log_value
        < theorem_b_probability(N, k, 2000, delta).log_value
    )
    released = [theorem_b_probability(N, k, m, delta).value for m in (25_000, 30_000)]
    assert released[1] < released[0] < 1.0
    doc = theorem_b_probability(N, k, 100, delta).to_dict()
    assert doc["name"] == "isometry-failure-probability"
    assert doc["inputs"]["m"] == 100
    with pytest.raises(ValueError):
        theorem_b_probability(4, 3, 10, 0.3)
    with pytest.raises(ValueError):
        theorem_b_probability(8, 1, 10, 0.6)


def test_sample_count_bound_magnitude_and_doubling():
    value = theorem_b_sample_bound(200, 1, DELTA_CRITICAL)
    expected = (
        2 * math.log(30.0 * math.e * 200 / (2 * DELTA_CRITICAL)) + math.log(2.0)
    ) / c0(DELTA_CRITICAL / 6.0)
    assert abs(value - expected) < 1e-9 * expected
    assert 1.7e4 < value < 1.9e4
    ratio = theorem_b_sample_bound(200, 2, DELTA_CRITICAL) / value
    assert 1.5 < ratio < 2.5


def test_minimum_degree_matches_brute_force_walk():
    def satisfied(d, k, alpha, delta):
        t = (2 * k - 1) * ((1.0 + alpha) / 2.0) ** d
        return (1.0 + delta / 6.0) * (1.0 + t) <= 1.0 + delta / 5.0 and (
            1.0 - delta / 6.0
        ) * (1.0 - t) >= 1.0 - delta / 5.0

    def brute(k, alpha, delta):
        for d in range(0, 5000):
            if satisfied(d, k, alpha, delta):
                return d
        raise AssertionError("no degree found")

    for k in (1, 2, 3, 5):
        for alpha in (-0.5, 0.0, 0.5, 0.9):
            for delta in (0.1, 0.41):
                assert theorem_b_min_degree(k, alpha, delta) == brute(k, alpha, delta)
    # near-unit coherence pushes the degree into the tens of thousands;
    # check minimality at the boundary instead of scanning from zero
    for k in (1, 4):
        alpha = math.cos(2 * math.pi / 200)
        d = theorem_b_min_degree(k, alpha, 0.1)
        assert satisfied(d, k, alpha, 0.1)
        assert d == 0 or not satisfied(d - 1, k, alpha, 0.1)
    with pytest.raises(ValueError):
        theorem_b_min_degree(0, 0.5, 0.3)
    with pytest.raises(ValueError):
        theorem_b_min_degree(2, 1.0, 0.3)
    with pytest.raises(ValueError):
        theorem_b_min_degree(2, 0.5, 0.0)


def test_moment_gap_bound_closed_form():
    g = np.array([0.6, 0.4])
    assert mse_bound(g, 2, 0.0, 8) == 0.0
    k, theta, d = 3, 0.2, 10
    uniform = np.full(k, 1.0 / k)
    base = (1.0 + math.cos(theta)) / 2.0
    assert abs(mse_bound(uniform, k, theta, d) - 2.0 * (1.0 - base**d)) < 1e-14
    expected = float(g @ g) * 2.0 * 2 * (1.0 - base**d)
    assert abs(mse_bound(g, 2, theta, d) - expected) < 1e-14
    with pytest.raises(ValueError):
        mse_bound(g, 0, theta, d)
    with pytest.raises(ValueError):
        mse_bound(g, 2, -0.1, d)
    with pytest.raises(ValueError):
        mse_bound(g, 2, 4.0, d)
    with pytest.raises(ValueError):
        mse_bound(g, 2, theta, -1)


def _independent_tau_star(code_points, targets, r, d, k):
    """Enumeration over supports with all blocks rebuilt from raw powers."""
    V = ((1.0 + code_points @ code_points.T) / 2.0) ** d
    np.fill_diagonal(V, 1.0)
    A = ((1.0 + code_points @ targets.T) / 2.0) ** d
    D = ((1.0 + targets @ targets.T) / 2.0) ** d
    np.fill_diagonal(D, 1.0)
    best, best_subset = math.inf, None
    for subset in itertools.combinations(range(code_points.shape[0]), k):
        idx = list(subset)
        c = np.linalg.solve(V[np.ix_(idx, idx)], A[idx, :] @ r)
        value = c @ V[np.ix_(idx, idx)] @ c - 2.0 * c @ (A[idx, :] @ r) + r @ D @ r
        if value < best:
            best, best_subset = value, subset
    return math.sqrt(max(0.0, best)), best_subset


def test_tau_star_matches_independent_enumeration():
    code = make_circle_code(6)
    targets = np.column_stack([np.cos([0.4, 2.5]), np.sin([0.4, 2.5])])
    r = np.array([0.6, 0.4])
    d = 3
    form = mse_form(code, targets, d)
    values = []
    for k in (1, 2, 3):
        report = tau_star(form, r, k)
        expected, subset = _independent_tau_star(code.points, targets, r, d, k)
        assert abs(report.value - expected) < 1e-10
        assert tuple(report.subset) == subset
        assert report.coeffs.shape == (6,)
        values.append(report.value)
    # larger supports can only reduce the optimal moment error
    assert values[0] >= values[1] - 1e-12 >= values[2] - 2e-12
    with pytest.raises(ValueError):
        tau_star(form, r, 0)
    with pytest.raises(ValueError):
        tau_star(form, r, 2, enumeration_cap=3)


def test_stability_constant_values_and_domain():
    assert candes_error_constant(0.0) == 4.0
    delta = 0.2
    expected = 4.0 * math.sqrt(1.2) / (1.0 - (1.0 + math.sqrt(2.0)) * delta)
    assert abs(candes_error_constant(delta) - expected) < 1e-14
    assert candes_error_constant(0.414) > 1e3
    for bad in (-0.1, DELTA_CRITICAL, 0.9):
        with pytest.raises(ValueError):
            candes_error_constant(bad)


def test_isometry_failure_bound_is_never_violated_empirically():
    # empirical P(delta_2 > delta) stays under the reported bound
    N, k, delta = 6, 1, 0.41
    code = make_circle_code(N)
    d = theorem_b_min_degree(k, code.alpha, delta)
    mono = monomial_matrix(2, d, code.points)
    rng = np.random.default_rng(35)
    ensembles = 100
    for m in (3000, 12500):
        bound = theorem_b_probability(N, k, m, delta).value
        failures = 0
        for _ in range(ensembles):
            rows = sample_coefficient_block(2, d, m, rng)
            phi = rows @ mono / math.sqrt(m)
            worst = 0.0
            for pair in itertools.combinations(range(N), 2):
                sub = phi[:, pair]
                gram = sub.T @ sub
                worst = max(worst, float(np.abs(np.linalg.eigvalsh(gram) - 1.0).max()))
            failures += worst > delta
        assert failures / ensembles <= bound
