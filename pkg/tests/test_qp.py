import numpy as np
import pytest
import scipy.sparse as sp

from brickforge.qp import (
    AdmmSettings,
    FactorizationCache,
    QpProblem,
    SolveStatus,
    solve,
)
from brickforge.qp_reference import solve_reference


def random_problem(rng, n, m_eq=0, m_ineq=None, density=0.3):
    """Feasible random sparse convex QP built around a known point."""
    m_ineq = m_ineq if m_ineq is not None else n
    B = sp.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(2**31)))
    P = (B @ B.T + 0.1 * sp.eye(n)).tocsc()
    q = rng.standard_normal(n)
    M = sp.random(m_eq + m_ineq, n, density=density, random_state=np.random.RandomState(rng.integers(2**31)))
    M = (M + 0.01 * sp.random(m_eq + m_ineq, n, density=0.05, random_state=np.random.RandomState(rng.integers(2**31)))).tocsc()
    x0 = rng.standard_normal(n)
    Mx0 = M @ x0
    l = np.empty(m_eq + m_ineq)
    u = np.empty(m_eq + m_ineq)
    l[:m_eq] = u[:m_eq] = Mx0[:m_eq]
    slack_lo = rng.uniform(0.1, 2.0, m_ineq)
    slack_hi = rng.uniform(0.1, 2.0, m_ineq)
    l[m_eq:] = Mx0[m_eq:] - slack_lo
    u[m_eq:] = Mx0[m_eq:] + slack_hi
    # sprinkle one-sided rows
    onesided = rng.random(m_ineq) < 0.3
    l[m_eq:][onesided] = -np.inf
    return QpProblem(P, q, M, l, u)


def kkt_residuals(p, sol):
    dual = np.linalg.norm(p.P @ sol.x + p.q + p.M.T @ sol.y, np.inf)
    Mx = p.M @ sol.x
    primal = np.linalg.norm(Mx - np.clip(Mx, p.l, p.u), np.inf)
    # complementary slackness: positive duals pair with the upper bound,
    # negative with the lower; measure min(gap, |y|) per row
    comp = 0.0
    for i in range(p.m):
        if p.u[i] - p.l[i] < 1e-12:
            continue
        if sol.y[i] > 1e-9:
            gap = abs(Mx[i] - p.u[i]) if np.isfinite(p.u[i]) else np.inf
            comp = max(comp, min(gap, sol.y[i]))
        elif sol.y[i] < -1e-9:
            gap = abs(Mx[i] - p.l[i]) if np.isfinite(p.l[i]) else np.inf
            comp = max(comp, min(gap, -sol.y[i]))
    return primal, dual, comp


class TestToyProblems:
    def test_scalar_bound(self):
        # minimize x^2/2 s.t. x >= 1
        p = QpProblem(sp.eye(1), np.zeros(1), sp.eye(1), np.array([1.0]), np.array([np.inf]))
        for solver in (solve, solve_reference):
            sol = solver(p)
            assert sol.status == SolveStatus.SOLVED
            assert sol.x[0] == pytest.approx(1.0, abs=1e-6)

    def test_symmetric_equality(self):
        # minimize ||x||^2/2 s.t. x1 + x2 = 2
        p = QpProblem(sp.eye(2), np.zeros(2), sp.csc_matrix([[1.0, 1.0]]), np.array([2.0]), np.array([2.0]))
        for solver in (solve, solve_reference):
            sol = solver(p)
            assert sol.status == SolveStatus.SOLVED
            assert np.allclose(sol.x, [1, 1], atol=1e-6)

    def test_agreement_on_50_var_problem(self):
        rng = np.random.default_rng(42)
        p = random_problem(rng, 50, m_eq=5, m_ineq=40)
        a = solve(p)
        r = solve_reference(p)
        assert a.status == SolveStatus.SOLVED and r.status == SolveStatus.SOLVED
        assert a.objective == pytest.approx(r.objective, rel=1e-5, abs=1e-7)

    def test_primal_infeasible_toy(self):
        # x >= 1 and x <= 0
        p = QpProblem(
            sp.eye(1), np.zeros(1), sp.csc_matrix([[1.0], [1.0]]),
            np.array([1.0, -np.inf]), np.array([np.inf, 0.0]),
        )
        assert solve_reference(p).status == SolveStatus.PRIMAL_INFEASIBLE
        assert solve(p).status == SolveStatus.PRIMAL_INFEASIBLE

    def test_dual_infeasible_toy(self):
        # unbounded: min -x, no constraints
        p = QpProblem(sp.csc_matrix((1, 1)), np.array([-1.0]), sp.csc_matrix((0, 1)), np.zeros(0), np.zeros(0))
        assert solve_reference(p).status == SolveStatus.DUAL_INFEASIBLE
        assert solve(p).status == SolveStatus.DUAL_INFEASIBLE

    def test_dimension_mismatch(self):
        from brickforge.qp import DimensionMismatch

        with pytest.raises((DimensionMismatch, ValueError)):
            QpProblem(sp.eye(2), np.zeros(3), sp.eye(2), np.zeros(2), np.zeros(2))


class TestSolverProperties:
    def test_kkt_residuals_on_random_batch(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(5, 60))
            p = random_problem(rng, n, m_eq=int(rng.integers(0, 4)), m_ineq=int(rng.integers(5, 50)))
            sol = solve(p)
            assert sol.status == SolveStatus.SOLVED
            primal, dual, comp = kkt_residuals(p, sol)
            scale = 10 * 1e-6 * max(1, np.linalg.norm(p.q, np.inf))
            assert dual <= scale
            assert primal <= scale
            assert comp <= 10 * 1e-6 * max(1.0, np.abs(sol.x).max())

    def test_warm_start_agrees_with_cold(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            n = int(rng.integers(5, 40))
            p = random_problem(rng, n)
            cold = solve(p)
            warm = solve(p, warm=(cold.x + rng.standard_normal(n) * 0.01, cold.y))
            assert cold.status == warm.status == SolveStatus.SOLVED
            assert np.abs(cold.x - warm.x).max() <= 1e-5 * max(1.0, np.abs(cold.x).max())

    def test_determinism(self):
        rng = np.random.default_rng(11)
        p = random_problem(rng, 30)
        a = solve(p)
        b = solve(p)
        assert np.array_equal(a.x, b.x)
        assert a.iterations == b.iterations

    def test_cache_reuse_changes_nothing(self):
        rng = np.random.default_rng(5)
        p = random_problem(rng, 25)
        cache = FactorizationCache()
        first = solve(p, cache=cache)
        assert cache.kkt is not None
        # same matrices, new bounds/q: cache path must converge to the same
        # solution as a fresh solve
        p2 = QpProblem(p.P, p.q * 0.5, p.M, p.l, p.u)
        cached = solve(p2, cache=cache, warm=(first.x, first.y))
        fresh = solve(p2)
        assert cached.status == fresh.status == SolveStatus.SOLVED
        assert np.abs(cached.x - fresh.x).max() <= 1e-5 * max(1.0, np.abs(fresh.x).max())

    def test_polish_reaches_tight_feasibility(self):
        rng = np.random.default_rng(9)
        p = random_problem(rng, 30, m_eq=3, m_ineq=25)
        sol = solve(p)
        assert sol.polished
        Mx = p.M @ sol.x
        assert np.max(Mx - p.u) <= 1e-9
        assert np.max(p.l - Mx) <= 1e-9
