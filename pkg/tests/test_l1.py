import numpy as np
import pytest

from oracles import l1_min_by_support_enumeration
from sphere_recovery import (
    RecoveryProblem,
    check_kkt,
    lp_oracle_bp,
    solve_bp,
    solve_bpdn,
)
from sphere_recovery.l1 import ORACLE_MAX_SIZE, solve


def _sparse_instance(rng, m, N, k, noise=0.0):
    A = rng.standard_normal((m, N)) / np.sqrt(m)
    c0 = np.zeros(N)
    support = rng.choice(N, size=k, replace=False)
    c0[support] = rng.uniform(0.5, 1.5, size=k) * rng.choice([-1.0, 1.0], size=k)
    b = A @ c0
    if noise > 0.0:
        u = rng.standard_normal(m)
        b = b + noise * np.linalg.norm(b) * u / np.linalg.norm(u)
    return A, b, c0


def test_well_posed_instance_is_recovered_exactly():
    rng = np.random.default_rng(20)
    A, b, c0 = _sparse_instance(rng, m=20, N=10, k=3)
    sol = solve_bp(A, b)
    assert sol.status == "optimal"
    assert np.linalg.norm(sol.c_star - c0) < 1e-8
    assert sol.residual_norm <= 1e-8 * (1.0 + np.linalg.norm(b))


def test_equality_solver_matches_lp_oracle():
    rng = np.random.default_rng(21)
    for _ in range(30):
        m = int(rng.integers(4, 16))
        N = int(rng.integers(4, 21))
        k = int(rng.integers(1, max(2, min(m, N) // 2 + 1)))
        A, b, _ = _sparse_instance(rng, m, N, k)
        sol = solve_bp(A, b)
        oracle = lp_oracle_bp(A, b)
        assert sol.status == oracle.status == "optimal"
        assert abs(sol.l1_value - oracle.l1_value) <= 1e-7 * (1.0 + oracle.l1_value)


def test_lp_oracle_matches_support_enumeration():
    rng = np.random.default_rng(22)
    for _ in range(20):
        m = int(rng.integers(2, 5))
        N = int(rng.integers(m, 7))
        A = rng.standard_normal((m, N))
        b = rng.standard_normal(m)
        oracle = lp_oracle_bp(A, b)
        brute = l1_min_by_support_enumeration(A, b)
        assert oracle.status == "optimal"
        assert abs(oracle.l1_value - brute) <= 1e-8 * (1.0 + brute)
        sol = solve_bp(A, b)
        assert abs(sol.l1_value - brute) <= 1e-7 * (1.0 + brute)


def test_lp_oracle_is_size_guarded():
    A = np.zeros((2, ORACLE_MAX_SIZE + 1))
    with pytest.raises(ValueError):
        lp_oracle_bp(A, np.zeros(2))


def test_ball_constrained_solutions_satisfy_kkt():
    rng = np.random.default_rng(23)
    for _ in range(25):
        m = int(rng.integers(5, 18))
        N = int(rng.integers(5, 18))
        k = int(rng.integers(1, max(2, min(m, N) // 2 + 1)))
        A, b, _ = _sparse_instance(rng, m, N, k, noise=0.05)
        tau = float(rng.uniform(0.2, 0.8)) * float(np.linalg.norm(b))
        sol = solve_bpdn(A, b, tau)
        assert sol.status == "optimal"
        assert sol.residual_norm <= tau * (1.0 + 1e-8)
        report = check_kkt(A, b, tau, sol.c_star, sol.dual)
        assert report.max_violation <= 1e-6


def test_ball_radius_above_data_norm_returns_zero():
    rng = np.random.default_rng(24)
    A = rng.standard_normal((6, 9))
    b = rng.standard_normal(6)
    sol = solve_bpdn(A, b, 1.1 * float(np.linalg.norm(b)))
    assert sol.status == "optimal"
    assert np.array_equal(sol.c_star, np.zeros(9))
    assert sol.l1_value == 0.0
    report = check_kkt(A, b, 1.1 * float(np.linalg.norm(b)), sol.c_star, sol.dual)
    assert report.max_violation <= 1e-9


def test_vanishing_ball_radius_approaches_the_equality_solution():
    rng = np.random.default_rng(25)
    A, b, _ = _sparse_instance(rng, m=12, N=8, k=2)
    eq = solve_bp(A, b)
    near = solve_bpdn(A, b, 1e-10 * float(np.linalg.norm(b)))
    assert np.linalg.norm(near.c_star - eq.c_star) < 1e-6
    with pytest.raises(ValueError):
        solve_bpdn(A, b, 0.0)


def test_infeasible_data_is_flagged():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    b = np.array([0.3, -0.2, 1.0])  # last coordinate unreachable
    assert solve_bp(A, b).status == "infeasible"
    assert lp_oracle_bp(A, b).status == "infeasible"
    assert solve_bpdn(A, b, 0.5).status == "infeasible"
    assert solve_bpdn(A, b, 1.5).status == "optimal"  # zero is now inside the ball


def test_solutions_scale_with_the_data():
    rng = np.random.default_rng(26)
    A, b, _ = _sparse_instance(rng, m=14, N=9, k=3)
    base = solve_bp(A, b)
    for gamma in (0.01, 7.0):
        scaled = solve_bp(A, gamma * b)
        assert np.linalg.norm(scaled.c_star - gamma * base.c_star) <= 1e-8 * (
            1.0 + abs(gamma) * np.linalg.norm(base.c_star)
        )
    tau = 0.3 * float(np.linalg.norm(b))
    base_ball = solve_bpdn(A, b, tau)
    scaled_ball = solve_bpdn(A, 5.0 * b, 5.0 * tau)
    assert np.linalg.norm(scaled_ball.c_star - 5.0 * base_ball.c_star) <= 1e-7 * (
        1.0 + 5.0 * np.linalg.norm(base_ball.c_star)
    )


def test_duplicate_columns_still_reach_the_optimal_value():
    A = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    b = np.array([1.0, 0.0])
    sol = solve_bp(A, b)
    assert sol.status == "optimal"
    # mass may split across the duplicates, but the value is pinned
    assert abs(sol.l1_value - 1.0) < 1e-7
    assert sol.residual_norm < 1e-7


def test_kkt_checker_flags_corrupted_solutions():
    rng = np.random.default_rng(27)
    A, b, _ = _sparse_instance(rng, m=12, N=8, k=2)
    sol = solve_bp(A, b)
    good = check_kkt(A, b, 0.0, sol.c_star, sol.dual)
    assert good.max_violation <= 1e-6
    corrupted = sol.c_star.copy()
    corrupted[int(np.argmin(np.abs(corrupted)))] += 0.25
    bad = check_kkt(A, b, 0.0, corrupted)
    assert bad.max_violation > 1e-3


def test_problem_validation():
    with pytest.raises(ValueError):
        RecoveryProblem(np.ones((2, 2)), np.ones(3))
    with pytest.raises(ValueError):
        RecoveryProblem(np.ones(4), np.ones(2))
    with pytest.raises(ValueError):
        RecoveryProblem(np.ones((2, 2)), np.array([np.nan, 0.0]))
    with pytest.raises(ValueError):
        RecoveryProblem(np.ones((2, 2)), np.ones(2), tau=-0.1)
    with pytest.raises(ValueError):
        check_kkt(np.ones((2, 2)), np.ones(2), -1.0, np.ones(2))


def test_zero_data_yields_zero_solution():
    A = np.random.default_rng(28).standard_normal((5, 7))
    sol = solve(RecoveryProblem(A, np.zeros(5), 0.0))
    assert sol.status == "optimal"
    assert np.array_equal(sol.c_star, np.zeros(7))


def test_solution_dict_is_json_friendly():
    import json

    rng = np.random.default_rng(29)
    A, b, _ = _sparse_instance(rng, m=8, N=6, k=2)
    payload = solve_bp(A, b).to_dict()
    text = json.dumps(payload)
    assert json.loads(text)["status"] == "optimal"
