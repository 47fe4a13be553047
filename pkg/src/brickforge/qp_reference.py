"""Dense primal-dual interior-point reference solver.

Independent code path from the ADMM solver, used as the test oracle for
QP correctness. Intended for small problems (n <= 500). A Mehrotra
predictor-corrector loop localizes the active set; a final exact KKT
solve on that active set recovers machine-precision primal/dual pairs
(the barrier iterates alone lose dual accuracy as the complementarity
products collapse).
"""
from __future__ import annotations

import time
import warnings

import numpy as np
import scipy.linalg as sla

from .qp import QpProblem, QpSolution, SolveStatus, _LOOSE

_MAX_ITER = 100
_DIVERGE = 1e10


def solve_reference(problem: QpProblem, tol: float = 1e-9) -> QpSolution:
    start = time.perf_counter()
    n = problem.n
    if n > 500:
        raise ValueError("reference solver is for small problems (n <= 500)")
    P = problem.P.toarray()
    q = problem.q
    M = problem.M.toarray() if problem.m else np.zeros((0, n))
    l, u = problem.l, problem.u

    eq = (u - l) < 1e-12
    E = M[eq]
    d = u[eq].copy()
    iu = np.where(~eq & (u < _LOOSE))[0]
    il = np.where(~eq & (l > -_LOOSE))[0]
    C = np.vstack([M[iu], -M[il]]) if len(iu) + len(il) else np.zeros((0, n))
    c = np.concatenate([u[iu], -l[il]])
    mi, me = len(c), len(d)

    def finish(x, y, status, pri, dua, iters):
        obj = problem.objective(x) if status == SolveStatus.SOLVED else np.nan
        return QpSolution(x, y, status, pri, dua, iters, time.perf_counter() - start, obj)

    def canonical_duals(z, nu):
        y = np.zeros(problem.m)
        y[eq] = nu
        y[iu] += z[: len(iu)]
        y[il] -= z[len(iu):]
        return y

    if mi == 0:
        return _equality_qp(problem, P, q, E, d, eq, finish)

    x = np.linalg.lstsq(
        np.vstack([E, np.eye(n)]) if me else np.eye(n),
        np.concatenate([d, np.zeros(n)]) if me else np.zeros(n),
        rcond=None,
    )[0]
    s = np.maximum(c - C @ x, 1.0)
    z = np.ones(mi)
    nu = np.zeros(me)

    scale_q = 1.0 + float(np.linalg.norm(q, np.inf))
    scale_c = 1.0 + float(np.linalg.norm(c, np.inf) if mi else 0.0) + float(np.linalg.norm(d, np.inf) if me else 0.0)
    mu0 = float(s @ z) / mi
    pri = dua = np.inf

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        for it in range(1, _MAX_ITER + 1):
            r_d = P @ x + q + C.T @ z + (E.T @ nu if me else 0.0)
            r_c = C @ x + s - c
            r_e = (E @ x - d) if me else np.zeros(0)
            mu = float(s @ z) / mi

            pri = max(float(np.linalg.norm(r_c, np.inf)), float(np.linalg.norm(r_e, np.inf)) if me else 0.0)
            dua = float(np.linalg.norm(r_d, np.inf))
            if pri <= tol * scale_c and dua <= tol * scale_q and mu <= tol * max(1.0, mu0):
                return finish(x, canonical_duals(z, nu), SolveStatus.SOLVED, pri, dua, it)

            # Once the barrier has localized the active set, recover an
            # exact KKT point from it.
            if pri <= 1e-8 * scale_c and mu <= 1e-10 * max(1.0, mu0):
                pol = _active_set_polish(P, q, C, c, E, d, s, z, mu, tol, scale_q, scale_c)
                if pol is not None:
                    x_p, z_p, nu_p, pri_p, dua_p = pol
                    return finish(x_p, canonical_duals(z_p, nu_p), SolveStatus.SOLVED, pri_p, dua_p, it)

            if np.linalg.norm(z, np.inf) > _DIVERGE * scale_q:
                return finish(x, canonical_duals(z, nu), SolveStatus.PRIMAL_INFEASIBLE, pri, dua, it)
            if np.linalg.norm(x, np.inf) > _DIVERGE:
                return finish(x, canonical_duals(z, nu), SolveStatus.DUAL_INFEASIBLE, pri, dua, it)

            W = np.minimum(z / s, 1e14)
            H = P + C.T @ (W[:, None] * C)
            K = np.block([[H, E.T], [E, np.zeros((me, me))]]) if me else H

            def newton(comp_rhs):
                top = -r_d - C.T @ ((comp_rhs + z * r_c) / s)
                rhs = np.concatenate([top, -r_e]) if me else top
                try:
                    sol = sla.solve(K, rhs, assume_a="sym")
                except (sla.LinAlgError, ValueError):
                    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
                if not np.all(np.isfinite(sol)):
                    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
                dx = sol[:n]
                dnu = sol[n:] if me else np.zeros(0)
                ds = -r_c - C @ dx
                dz = (comp_rhs - z * ds) / s
                return dx, dnu, ds, dz

            dx_a, dnu_a, ds_a, dz_a = newton(-s * z)
            alpha_p = _step_length(s, ds_a)
            alpha_d = _step_length(z, dz_a)
            mu_aff = float((s + alpha_p * ds_a) @ (z + alpha_d * dz_a)) / mi
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

            comp = -s * z + sigma * mu - ds_a * dz_a
            dx, dnu, ds, dz = newton(comp)
            alpha_p = 0.99 * _step_length(s, ds)
            alpha_d = 0.99 * _step_length(z, dz)
            x = x + alpha_p * dx
            s = s + alpha_p * ds
            z = z + alpha_d * dz
            nu = nu + alpha_d * dnu

    # Out of iterations: one last polish attempt before reporting.
    mu = float(s @ z) / mi
    pol = _active_set_polish(P, q, C, c, E, d, s, z, mu, tol, scale_q, scale_c)
    if pol is not None:
        x_p, z_p, nu_p, pri_p, dua_p = pol
        return finish(x_p, canonical_duals(z_p, nu_p), SolveStatus.SOLVED, pri_p, dua_p, _MAX_ITER)
    return finish(x, canonical_duals(z, nu), SolveStatus.MAX_ITER, pri, dua, _MAX_ITER)


def _active_set_polish(P, q, C, c, E, d, s, z, mu, tol, scale_q, scale_c):
    """Exact equality-KKT solve on the active set implied by (s, z)."""
    n = P.shape[1]
    me = len(d)
    active = np.where(z > s)[0]
    C_act = C[active]
    A_full = np.vstack([E, C_act]) if me else C_act
    b_full = np.concatenate([d, c[active]]) if me else c[active]
    k = len(b_full)
    K = np.block([[P, A_full.T], [A_full, np.zeros((k, k))]]) if k else P
    rhs = np.concatenate([-q, b_full]) if k else -q
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    if np.linalg.norm(K @ sol - rhs, np.inf) > 1e-8 * (1.0 + np.linalg.norm(rhs, np.inf)):
        return None
    x = sol[:n]
    nu = sol[n: n + me]
    z_act = sol[n + me:]
    if np.any(z_act < -tol * 10 * scale_q):
        return None
    z_full = np.zeros(len(c))
    z_full[active] = np.maximum(z_act, 0.0)
    slack = c - C @ x
    if np.any(slack < -tol * 10 * scale_c):
        return None
    pri = max(float(np.max(-slack, initial=0.0)), float(np.linalg.norm(E @ x - d, np.inf)) if me else 0.0)
    dua = float(np.linalg.norm(P @ x + q + C.T @ z_full + (E.T @ nu if me else 0.0), np.inf))
    if pri > tol * scale_c or dua > tol * scale_q * 10:
        return None
    return x, z_full, nu, pri, dua


def _step_length(v, dv) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _equality_qp(problem, P, q, E, d, eq, finish):
    """Direct KKT solve when there are no inequality rows."""
    n = P.shape[0]
    me = len(d)
    K = np.block([[P, E.T], [E, np.zeros((me, me))]]) if me else P
    rhs = np.concatenate([-q, d]) if me else -q
    if me == 0 and not np.any(P):
        if np.linalg.norm(q, np.inf) > 0:
            return finish(np.zeros(n), np.zeros(problem.m), SolveStatus.DUAL_INFEASIBLE, 0.0, np.inf, 0)
        return finish(np.zeros(n), np.zeros(problem.m), SolveStatus.SOLVED, 0.0, 0.0, 0)
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    kkt_resid = np.linalg.norm(K @ sol - rhs, np.inf)
    if kkt_resid > 1e-7 * (1.0 + np.linalg.norm(rhs, np.inf)):
        if me and np.linalg.norm(E @ sol[:n] - d, np.inf) > 1e-7 * (1.0 + np.linalg.norm(d, np.inf)):
            return finish(sol[:n], np.zeros(problem.m), SolveStatus.PRIMAL_INFEASIBLE, np.inf, np.inf, 0)
        return finish(sol[:n], np.zeros(problem.m), SolveStatus.DUAL_INFEASIBLE, 0.0, np.inf, 0)
    x = sol[:n]
    y = np.zeros(problem.m)
    if me:
        y[eq] = sol[n:]
    pri = float(np.linalg.norm(E @ x - d, np.inf)) if me else 0.0
    dua = float(np.linalg.norm(P @ x + q + (E.T @ sol[n:] if me else 0.0), np.inf))
    return finish(x, y, SolveStatus.SOLVED, pri, dua, 1)
