import itertools

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from ddstmpc.optim import (
    LpProblem,
    QpProblem,
    RankConditionError,
    SolveKind,
    SolveStatus,
    SolverError,
    right_pinv,
    solve_lp,
    solve_qp,
    solve_weighted_log,
)


# ---------------------------------------------------------------- status

def test_status_invariants():
    with pytest.raises(ValueError):
        SolveStatus(SolveKind.OPTIMAL)
    with pytest.raises(ValueError):
        SolveStatus(SolveKind.INFEASIBLE, solution=np.zeros(1))
    err = SolverError(SolveStatus(SolveKind.INFEASIBLE), "probe")
    assert err.status.kind is SolveKind.INFEASIBLE


# ---------------------------------------------------------------- LP

def test_lp_trivial_examples():
    res = solve_lp(LpProblem(c=[1.0], lb=[1.0]))
    assert res.ok and res.solution[0] == pytest.approx(1.0)
    res = solve_lp(LpProblem(c=[1.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0]))
    assert res.kind is SolveKind.INFEASIBLE
    res = solve_lp(LpProblem(c=[-1.0], A_ub=[[-1.0]], b_ub=[0.0]))
    assert res.kind is SolveKind.UNBOUNDED


def test_lp_validation():
    with pytest.raises(ValueError):
        LpProblem(c=[1.0, 2.0])  # nothing constrains it
    with pytest.raises(ValueError):
        LpProblem(c=[1.0], A_ub=[[1.0, 2.0]], b_ub=[1.0])
    with pytest.raises(ValueError):
        LpProblem(c=[1.0], lb=[2.0], ub=[1.0])


def test_lp_text_dump():
    text = LpProblem(c=[1.0, -2.0], A_ub=[[1.0, 1.0]], b_ub=[3.0], lb=[0.0, 0.0]).to_text()
    assert "minimize" in text.lower() and "3" in text


def vertex_enumeration_2d(A, b):
    """Feasible pairwise intersections of constraint lines."""
    for i, j in itertools.combinations(range(len(b)), 2):
        M = A[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, b[[i, j]])
        if np.all(A @ v <= b + 1e-9):
            yield v


@pytest.mark.parametrize("seed", range(40))
def test_lp_against_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(3, 9))
    A = rng.normal(size=(m, 2))
    b = rng.normal(size=m) + (0.5 if seed % 5 else -1.5)
    # close the region with a box so the optimum is a vertex or the set is empty
    A = np.vstack([A, np.eye(2), -np.eye(2)])
    b = np.concatenate([b, np.full(4, 5.0)])
    c = rng.normal(size=2)
    verts = list(vertex_enumeration_2d(A, b))
    res = solve_lp(LpProblem(c=c, A_ub=A, b_ub=b))
    if not verts:
        assert res.kind is SolveKind.INFEASIBLE
    else:
        assert res.ok
        assert res.objective_value == pytest.approx(min(c @ v for v in verts), abs=1e-8)
        assert np.all(A @ res.solution <= b + 1e-8)


def test_lp_against_highs():
    rng = np.random.default_rng(7)
    for _ in range(150):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 25))
        me = int(rng.integers(0, 3))
        scale = 10.0 ** rng.uniform(-3, 2, size=n)
        A = rng.normal(size=(m, n)) * scale
        b = rng.normal(size=m) + 0.5
        c = rng.normal(size=n)
        Ae = rng.normal(size=(me, n)) if me else None
        be = rng.normal(size=me) if me else None
        lb = np.where(rng.random(n) < 0.5, -2.0, -np.inf)
        ub = np.where(rng.random(n) < 0.5, 2.0, np.inf)
        ours = solve_lp(LpProblem(c, A, b, Ae, be, lb, ub))
        ref = linprog(c, A, b, Ae, be, bounds=list(zip(lb, ub)), method="highs")
        expected = {0: SolveKind.OPTIMAL, 2: SolveKind.INFEASIBLE, 3: SolveKind.UNBOUNDED}[ref.status]
        assert ours.kind is expected
        if expected is SolveKind.OPTIMAL:
            assert ours.objective_value == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))


def test_lp_kkt_self_consistency():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 3))
    b = rng.uniform(0.5, 1.5, size=12)
    c = rng.normal(size=3)
    res = solve_lp(LpProblem(c=c, A_ub=A, b_ub=b))
    assert res.ok
    y = res.duals["ineq"]
    assert np.all(y >= -1e-9)
    np.testing.assert_allclose(c + A.T @ y, 0.0, atol=1e-7)
    np.testing.assert_allclose(y * (A @ res.solution - b), 0.0, atol=1e-7)


def test_lp_degenerate_cycling_example():
    # Beale's example cycles under the textbook rule without an anti-cycling safeguard
    c = np.array([-0.75, 150.0, -0.02, 6.0])
    A = np.array([[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]])
    b = np.array([0.0, 0.0, 1.0])
    res = solve_lp(LpProblem(c=c, A_ub=A, b_ub=b, lb=np.zeros(4)))
    assert res.ok and res.objective_value == pytest.approx(-0.05)


# ---------------------------------------------------------------- QP

def test_qp_trivial_examples():
    res = solve_qp(QpProblem(Q=[[1.0]], q=[0.0], A=[[-1.0]], b=[-2.0]))
    assert res.ok and res.solution[0] == pytest.approx(2.0)
    res = solve_qp(QpProblem(Q=[[1.0]], q=[-1.0]))
    assert res.ok and res.solution[0] == pytest.approx(1.0)
    res = solve_qp(QpProblem(Q=[[1.0]], q=[0.0], A=[[1.0], [-1.0]], b=[0.0, -1.0]))
    assert res.kind is SolveKind.INFEASIBLE


def test_qp_validation():
    with pytest.raises(ValueError):
        QpProblem(Q=[[1.0, 2.0], [0.0, 1.0]], q=[0.0, 0.0])
    with pytest.raises(ValueError):
        QpProblem(Q=[[1.0, 0.0], [0.0, 0.0]], q=[0.0, 0.0])
    QpProblem(Q=[[1.0, 0.0], [0.0, 0.0]], q=[0.0, 0.0], semidefinite=True)
    with pytest.raises(ValueError):
        QpProblem(Q=[[1.0, 0.0], [0.0, -1.0]], q=[0.0, 0.0], semidefinite=True)


def projected_gradient_box(Q, q, lo, hi, iters=20000):
    x = np.clip(np.zeros(len(q)), lo, hi)
    step = 1.0 / np.linalg.eigvalsh(Q).max()
    for _ in range(iters):
        x = np.clip(x - step * (Q @ x + q), lo, hi)
    return x


@pytest.mark.parametrize("seed", range(25))
def test_qp_against_projected_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    M = rng.normal(size=(3, 3))
    Q = M @ M.T + 0.5 * np.eye(3)
    q = rng.normal(size=3) * 3
    lo, hi = -rng.uniform(0.1, 1, 3), rng.uniform(0.1, 1, 3)
    A = np.vstack([np.eye(3), -np.eye(3)])
    b = np.concatenate([hi, -lo])
    res = solve_qp(QpProblem(Q, q, A, b))
    assert res.ok
    np.testing.assert_allclose(res.solution, projected_gradient_box(Q, q, lo, hi), atol=1e-6)
    assert np.all(res.duals["ineq"] >= -1e-9)


def test_qp_box_closed_form():
    rng = np.random.default_rng(5)
    for _ in range(20):
        diag = rng.uniform(0.5, 3, 4)
        q = rng.normal(size=4) * 2
        lo, hi = -np.ones(4), np.ones(4)
        res = solve_qp(QpProblem(np.diag(diag), q, np.vstack([np.eye(4), -np.eye(4)]), np.r_[hi, -lo]))
        np.testing.assert_allclose(res.solution, np.clip(-q / diag, lo, hi), atol=1e-9)


def test_qp_against_cvxpy_general():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        M = rng.normal(size=(n, n))
        Q = M @ M.T + 0.1 * np.eye(n)
        q = rng.normal(size=n)
        A = rng.normal(size=(8, n))
        b = rng.uniform(0.1, 1.0, 8)
        E = rng.normal(size=(1, n))
        f = rng.normal(size=1) * 0.1
        ours = solve_qp(QpProblem(Q, q, A, b, E, f))
        x = cp.Variable(n)
        prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(x, Q) + q @ x), [A @ x <= b, E @ x == f])
        prob.solve(solver=cp.CLARABEL)
        assert ours.ok
        assert ours.objective_value == pytest.approx(prob.value, abs=1e-6 * (1 + abs(prob.value)))


def test_qp_semidefinite_cost_on_subset():
    # cost only on u; beta free inside a box; equality ties them together
    Q = np.diag([1.0, 0.0, 0.0])
    E = np.array([[-1.0, 1.0, 1.0]])
    A = np.vstack([np.hstack([np.zeros((2, 1)), np.eye(2)]), np.hstack([np.zeros((2, 1)), -np.eye(2)])])
    res = solve_qp(QpProblem(Q, np.zeros(3), A, np.ones(4), E, [0.5], semidefinite=True))
    assert res.ok and res.solution[0] == pytest.approx(0.0, abs=1e-9)


# ---------------------------------------------------------------- weighted log

def box(lo, hi):
    n = len(lo)
    return np.vstack([np.eye(n), -np.eye(n)]), np.r_[hi, -np.asarray(lo)]


def test_weighted_log_examples():
    H, h = box([-1, -1], [1, 1])
    fit = solve_weighted_log(np.eye(2), [1, 1], H, h)
    np.testing.assert_allclose(fit.center, 0, atol=1e-7)
    np.testing.assert_allclose(fit.scales, [1, 1], atol=1e-7)
    H, h = box([-2, -1], [2, 1])
    fit = solve_weighted_log(np.eye(2), None, H, h)
    np.testing.assert_allclose(fit.scales, [1, 1], atol=1e-7)
    assert abs(fit.center[1]) < 1e-7 and abs(fit.center[0]) <= 1 + 1e-7
    H, h = box([-0.5, -0.5], [0.5, 0.5])
    fit = solve_weighted_log(np.eye(2), None, H, h)
    np.testing.assert_allclose(fit.scales, [0.5, 0.5], atol=1e-7)
    np.testing.assert_allclose(fit.center, 0, atol=1e-7)


def cvxpy_weighted_log(G, d, H, h):
    N, p = G.shape
    c = cp.Variable(N)
    beta = cp.Variable(p)
    cons = [H @ c + np.abs(H @ G) @ beta <= h, beta <= 1]
    prob = cp.Problem(cp.Maximize(d @ cp.log(beta)), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


@pytest.mark.parametrize("seed", range(8))
def test_weighted_log_against_cvxpy(seed):
    rng = np.random.default_rng(seed)
    N, p = 3, int(rng.integers(3, 7))
    G = rng.normal(size=(N, p))
    H = rng.normal(size=(20, N))
    h = rng.uniform(0.5, 2.0, 20)
    d = rng.uniform(0.2, 2.0, p)
    fit = solve_weighted_log(G, d, H, h)
    assert np.all(H @ fit.center + np.abs(H @ G) @ fit.scales <= h + 1e-8)
    assert np.all((fit.scales >= 0) & (fit.scales <= 1 + 1e-12))
    assert fit.objective == pytest.approx(cvxpy_weighted_log(G, d, H, h), abs=1e-6)


def test_weighted_log_linear_mode_feasible():
    rng = np.random.default_rng(4)
    G = rng.normal(size=(2, 4))
    H = rng.normal(size=(12, 2))
    h = rng.uniform(0.5, 1.5, 12)
    fit = solve_weighted_log(G, None, H, h, linear=True)
    assert fit.mode == "linear"
    assert np.all(H @ fit.center + np.abs(H @ G) @ fit.scales <= h + 1e-8)


def test_weighted_log_shrinking_never_grows():
    rng = np.random.default_rng(11)
    G = rng.normal(size=(2, 3))
    Zc = rng.normal(size=(2, 6))
    # symmetric polytope so that c* = 0
    H = np.vstack([Zc.T, -Zc.T])
    h = np.ones(12) * 3
    big = solve_weighted_log(G, None, H, h)
    small = solve_weighted_log(G, None, H, 0.5 * h)
    assert np.all(small.scales <= big.scales + 1e-7)


def test_weighted_log_errors():
    H, h = box([-1, -1], [1, 1])
    with pytest.raises(SolverError) as err:
        solve_weighted_log(np.eye(2), None, np.vstack([H, [[1.0, 0.0]], [[-1.0, 0.0]]]), np.r_[h, -2.0, -2.0])
    assert err.value.status.kind is SolveKind.INFEASIBLE
    with pytest.raises(SolverError) as err:
        solve_weighted_log(np.zeros((2, 2)), None, H, h)
    assert err.value.status.kind is SolveKind.NUMERICAL_FAILURE
    flat = np.vstack([H, [[1.0, 0.0]]]), np.r_[h, -1.0]  # x1 pinned to -1: no interior
    with pytest.raises(SolverError) as err:
        solve_weighted_log(np.eye(2), None, *flat)
    assert err.value.status.kind is SolveKind.NUMERICAL_FAILURE
    with pytest.raises(ValueError):
        solve_weighted_log(np.eye(2), [-1, 1], H, h)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), scale=st.floats(0.1, 10))
def test_weighted_log_always_inside(seed, scale):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(2, 3))
    H = rng.normal(size=(10, 2))
    h = rng.uniform(0.1, 1, 10) * scale
    fit = solve_weighted_log(G, None, H, h)
    assert np.all(H @ fit.center + np.abs(H @ G) @ fit.scales <= h + 1e-8 * (1 + h.max()))


# ---------------------------------------------------------------- right pseudoinverse

def test_right_pinv_examples():
    np.testing.assert_allclose(right_pinv(np.eye(3)), np.eye(3))
    M = np.hstack([np.eye(2), np.zeros((2, 1))])
    np.testing.assert_allclose(right_pinv(M), np.vstack([np.eye(2), np.zeros((1, 2))]))
    R = np.random.default_rng(0).normal(size=(3, 20))
    np.testing.assert_allclose(R @ right_pinv(R), np.eye(3), atol=1e-9)


def test_right_pinv_rank_errors():
    with pytest.raises(RankConditionError, match="rank"):
        right_pinv(np.ones((2, 5)))
    with pytest.raises(RankConditionError):
        right_pinv(np.ones((3, 2)))
