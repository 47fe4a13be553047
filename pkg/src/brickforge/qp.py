"""Sparse convex QP solver.

Canonical form: minimize 0.5 x'Px + q'x subject to l <= Mx <= u, with
equality rows encoded as l_i = u_i. The solver is an operator-splitting
(ADMM) iteration on the regularized KKT system with Ruiz equilibration,
per-row penalties, adaptive penalty updates, warm starting, factorization
caching across solves with unchanged (P, M), and an active-set polish
step that drives residuals to machine precision on nondegenerate
problems. A dense interior-point reference lives in qp_reference.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INF = np.inf
_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_RHO_EQ_SCALE = 1e3
_LOOSE = 1e30  # bounds beyond this are treated as infinite


class DimensionMismatch(ValueError):
    pass


class NumericalBreakdown(RuntimeError):
    pass


class SolveStatus(Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"


# P matrices already checked for symmetry, keyed by object id with the
# object kept alive so ids cannot be recycled (bounded LRU-ish trim).
_validated_P: dict[int, Any] = {}


@dataclass(frozen=True)
class QpProblem:
    P: sp.csc_matrix
    q: np.ndarray
    M: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        # Keep already-csc matrices by reference so factorization caches
        # keyed on object identity survive problem reconstruction.
        if not sp.issparse(self.P) or self.P.format != "csc":
            object.__setattr__(self, "P", sp.csc_matrix(self.P))
        if not sp.issparse(self.M) or self.M.format != "csc":
            object.__setattr__(self, "M", sp.csc_matrix(self.M))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "l", np.asarray(self.l, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        n = self.P.shape[0]
        m = self.M.shape[0]
        if self.P.shape != (n, n) or self.q.shape != (n,) or self.M.shape[1] != n:
            raise DimensionMismatch("P/q/M dimensions disagree")
        if self.l.shape != (m,) or self.u.shape != (m,):
            raise DimensionMismatch("bound dimensions disagree")
        if np.any(self.l > self.u):
            raise ValueError("l must be <= u elementwise")
        if id(self.P) not in _validated_P:
            sym_gap = abs(self.P - self.P.T)
            if sym_gap.nnz and sym_gap.max() > 1e-12:
                raise ValueError("P must be symmetric")
            if len(_validated_P) > 256:
                for stale in list(_validated_P)[:128]:
                    del _validated_P[stale]
            _validated_P[id(self.P)] = self.P

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.M.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ (self.P @ x)) + float(self.q @ x)


@dataclass(frozen=True)
class AdmmSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_infeasible: float = 1e-5
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    check_interval: int = 10
    adaptive_rho_interval: int = 50
    scaling_iters: int = 10
    polish: bool = True
    polish_delta: float = 1e-7
    # attempt an early polish every this many iterations (0 = only after
    # convergence); rescues degenerate problems whose duals drift
    polish_interval: int = 100
    # run the polish after normal convergence too (drives residuals to
    # machine precision; skip in throughput-sensitive loops)
    polish_final: bool = True


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: SolveStatus
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time: float
    objective: float
    polished: bool = False


@dataclass
class FactorizationCache:
    """Reusable solver state, valid while the exact (P, M) objects and the
    equality pattern of the bounds are unchanged."""

    problem_key: tuple = ()
    scaling: tuple | None = None  # (D, E, c)
    rho_vec: np.ndarray | None = None
    rho_base: float = 0.0
    kkt: Any = None  # splu factor
    kkt_mat: Any = None  # assembled csc KKT, -1/rho slots updatable
    diag_pos: Any = None
    eq_mask: np.ndarray | None = None
    P_s: Any = None
    q_s: Any = None
    M_s: Any = None
    M_csr: Any = None


def _colmax_csc(absdata, indptr, n):
    if len(absdata) == 0:
        return np.zeros(n)
    out = np.zeros(n)
    counts = np.diff(indptr)
    nonempty = counts > 0
    reduced = np.maximum.reduceat(absdata, indptr[:-1][nonempty])
    out[nonempty] = reduced
    return out


def _ruiz_scale(P, q, M, iters):
    """Modified Ruiz equilibration of the KKT block matrix plus cost
    scaling; works on the raw csc arrays to stay cheap."""
    n, m = P.shape[0], M.shape[0]
    p_abs = np.abs(P.data)
    p_rows = P.indices
    p_cols = np.repeat(np.arange(n), np.diff(P.indptr))
    m_abs = np.abs(M.data)
    m_rows = M.indices
    m_cols = np.repeat(np.arange(n), np.diff(M.indptr))
    D = np.ones(n)
    E = np.ones(m)
    for _ in range(iters):
        pe = p_abs * D[p_rows] * D[p_cols]
        me = m_abs * E[m_rows] * D[m_cols] if len(m_abs) else m_abs
        col_p = _colmax_csc(pe, P.indptr, n)
        col_m = _colmax_csc(me, M.indptr, n)
        row_m = np.zeros(m)
        if len(me):
            np.maximum.at(row_m, m_rows, me)
        d = np.sqrt(np.maximum(col_p, col_m))
        e = np.sqrt(row_m)
        d = 1.0 / np.where(d < 1e-8, 1.0, d)
        e = 1.0 / np.where(e < 1e-8, 1.0, e)
        D *= d
        E *= e
    # One-shot cost normalization over the structurally nonzero columns;
    # a compounded per-iteration rule explodes when P is mostly empty.
    pe = p_abs * D[p_rows] * D[p_cols]
    col_p = _colmax_csc(pe, P.indptr, n)
    nonzero = col_p > 0
    q_norm = float(np.linalg.norm(D * q, np.inf)) if n else 0.0
    denom = max(float(col_p[nonzero].mean()) if np.any(nonzero) else 0.0, q_norm)
    c = 1.0 / denom if denom > 1e-8 else 1.0
    c = min(max(c, 1e-3), 1e3)
    Ps = sp.csc_matrix((c * P.data * D[p_rows] * D[p_cols], P.indices, P.indptr), shape=P.shape)
    Ms = sp.csc_matrix((M.data * E[m_rows] * D[m_cols], M.indices, M.indptr), shape=M.shape)
    qs = c * D * q
    return Ps, qs, Ms, (D, E, c)


def _eq_mask(l, u):
    # Tolerance-slacked equalities (tiny finite ranges) count as
    # equalities so they keep the stiff penalty.
    with np.errstate(invalid="ignore"):
        width = u - l
        finite = np.isfinite(width)
        scale = 1.0 + np.where(finite, np.abs(u) + np.abs(l), 0.0)
        return finite & (width <= 1e-6 * scale)


def _build_rho(l, u, base):
    eq = _eq_mask(l, u)
    loose = (l < -_LOOSE) & (u > _LOOSE)
    rho = np.full(len(l), base)
    rho[eq] = base * _RHO_EQ_SCALE
    rho[loose] = _RHO_MIN
    return np.clip(rho, _RHO_MIN, _RHO_MAX), eq


def stack_blocks(shape, blocks):
    """Sparse block assembly from (row_offset, col_offset, matrix) triples;
    much cheaper than bmat for the fixed layouts used here. Matrices may
    also be ("diag", vector) pairs."""
    rows, cols, data = [], [], []
    for r0, c0, m in blocks:
        if isinstance(m, tuple) and m[0] == "diag":
            vec = np.asarray(m[1], dtype=float)
            idx = np.arange(len(vec))
            rows.append(idx + r0)
            cols.append(idx + c0)
            data.append(vec)
        else:
            coo = m.tocoo()
            rows.append(coo.row + r0)
            cols.append(coo.col + c0)
            data.append(coo.data)
    if not rows:
        return sp.csc_matrix(shape)
    return sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def _assemble_kkt(P, M, sigma, rho_vec):
    """Quasi-definite KKT matrix plus the csc data positions of the
    -1/rho diagonal, for cheap penalty updates."""
    n, m = P.shape[0], M.shape[0]
    kkt = stack_blocks(
        (n + m, n + m),
        [
            (0, 0, P),
            (0, 0, ("diag", np.full(n, sigma))),
            (0, n, M.T),
            (n, 0, M),
            (n, n, ("diag", -1.0 / rho_vec)),
        ]
        if m
        else [(0, 0, P), (0, 0, ("diag", np.full(n, sigma)))],
    )
    kkt.sum_duplicates()
    kkt.sort_indices()
    if m:
        # the diagonal entry is the largest row index in its column
        diag_pos = kkt.indptr[n + 1: n + m + 1] - 1
    else:
        diag_pos = np.zeros(0, dtype=int)
    return kkt, diag_pos


_DENSE_KKT_LIMIT = 320


class _DenseFactor:
    """Dense LU stand-in for splu; wins below a few hundred rows."""

    __slots__ = ("lu",)

    def __init__(self, arr):
        self.lu = sla.lu_factor(arr, check_finite=False)

    def solve(self, rhs):
        return sla.lu_solve(self.lu, rhs, check_finite=False)


def _factor_kkt_mat(kkt, diag_pos, rho_vec, n=0):
    if len(diag_pos):
        kkt.data[diag_pos] = -1.0 / rho_vec
    dense = kkt.shape[0] <= _DENSE_KKT_LIMIT
    try:
        if dense:
            return _DenseFactor(kkt.toarray())
        return spla.splu(kkt)
    except (RuntimeError, sla.LinAlgError, ValueError):
        pass
    # retry with stronger regularization on a copy
    for bump in (1e2, 1e4):
        boosted = kkt.copy()
        boosted += sp.diags(np.concatenate([np.full(n, bump * 1e-6), np.zeros(kkt.shape[0] - n)]))
        try:
            if dense:
                return _DenseFactor(boosted.toarray())
            return spla.splu(boosted.tocsc())
        except (RuntimeError, sla.LinAlgError, ValueError):
            continue
    raise NumericalBreakdown("KKT factorization failed after regularization retries")


def solve(
    problem: QpProblem,
    settings: AdmmSettings | None = None,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
    cache: FactorizationCache | None = None,
) -> QpSolution:
    """ADMM solve; `cache` is reused and refreshed in place so repeated
    solves with unchanged (P, M) skip scaling and factorization."""
    settings = settings or AdmmSettings()
    start = time.perf_counter()
    n, m = problem.n, problem.m

    if n == 0:
        return QpSolution(
            np.zeros(0), np.zeros(m), SolveStatus.SOLVED, 0.0, 0.0, 0, time.perf_counter() - start, 0.0
        )

    key = (id(problem.P), id(problem.M), problem.P.nnz, problem.M.nnz, settings.rho, settings.sigma)
    if cache is None or cache.problem_key != key or cache.kkt is None:
        Ps, qs, Ms, scaling = _ruiz_scale(problem.P, problem.q, problem.M, settings.scaling_iters)
        rho_base = settings.rho
        rho_vec, eq_mask = _build_rho(problem.l, problem.u, rho_base)
        kkt_mat, diag_pos = _assemble_kkt(Ps, Ms, settings.sigma, rho_vec)
        factor = _factor_kkt_mat(kkt_mat, diag_pos, rho_vec, n=n)
        if cache is None:
            cache = FactorizationCache()
        cache.problem_key = key
        cache.scaling = scaling
        cache.rho_vec = rho_vec
        cache.rho_base = rho_base
        cache.kkt = factor
        cache.kkt_mat, cache.diag_pos = kkt_mat, diag_pos
        cache.eq_mask = eq_mask
        cache.P_s, cache.q_s, cache.M_s = Ps, qs, Ms
        cache.M_csr = None
    else:
        scaling = cache.scaling
        Ps, Ms = cache.P_s, cache.M_s
        D, E, c = scaling
        qs = c * (D * problem.q)  # q may change between cached solves
        rho_base = cache.rho_base or settings.rho
        new_eq = _eq_mask(problem.l, problem.u)
        if not np.array_equal(new_eq, cache.eq_mask):
            cache.rho_vec, cache.eq_mask = _build_rho(problem.l, problem.u, rho_base)
            cache.kkt = _factor_kkt_mat(cache.kkt_mat, cache.diag_pos, cache.rho_vec, n=n)
        rho_vec = cache.rho_vec
        factor = cache.kkt

    D, E, c = scaling
    l_s = E * problem.l if m else np.zeros(0)
    u_s = E * problem.u if m else np.zeros(0)

    if warm is not None and warm[0].shape == (n,):
        x = warm[0] / D
        y = c * (warm[1] / E) if m else np.zeros(0)
        z = np.clip(Ms @ x, l_s, u_s) if m else np.zeros(0)
    else:
        x = np.zeros(n)
        y = np.zeros(m)
        z = np.zeros(m)

    status = SolveStatus.MAX_ITER
    pri_res = dua_res = np.inf
    iterations = settings.max_iter
    sigma, alpha = settings.sigma, settings.alpha
    x_prev = x.copy()
    y_prev = y.copy()

    for it in range(1, settings.max_iter + 1):
        x_prev, y_prev = x, y
        if m:
            rhs = np.concatenate([sigma * x - qs, z - y / rho_vec])
            sol = factor.solve(rhs)
            x_t = sol[:n]
            nu = sol[n:]
            z_t = z + (nu - y) / rho_vec
            x = alpha * x_t + (1 - alpha) * x
            z_mid = alpha * z_t + (1 - alpha) * z
            z_new = np.clip(z_mid + y / rho_vec, l_s, u_s)
            y = y + rho_vec * (z_mid - z_new)
            z = z_new
        else:
            x_t = factor.solve(sigma * x - qs)
            x = alpha * x_t + (1 - alpha) * x

        if it % settings.check_interval == 0 or it == settings.max_iter:
            x_u = D * x
            y_u = (E * y) / c if m else np.zeros(0)
            z_u = z / E if m else np.zeros(0)
            Mx = problem.M @ x_u if m else np.zeros(0)
            Px = problem.P @ x_u
            MTy = problem.M.T @ y_u if m else np.zeros(n)
            pri_res = float(np.linalg.norm(Mx - z_u, np.inf)) if m else 0.0
            dua_res = float(np.linalg.norm(Px + problem.q + MTy, np.inf))
            eps_pri = settings.eps_abs + settings.eps_rel * max(
                float(np.linalg.norm(Mx, np.inf)) if m else 0.0,
                float(np.linalg.norm(z_u, np.inf)) if m else 0.0,
            )
            eps_dua = settings.eps_abs + settings.eps_rel * max(
                float(np.linalg.norm(Px, np.inf)),
                float(np.linalg.norm(MTy, np.inf)),
                float(np.linalg.norm(problem.q, np.inf)),
            )
            if pri_res <= eps_pri and dua_res <= eps_dua:
                status = SolveStatus.SOLVED
                iterations = it
                break
            if (
                m
                and settings.polish
                and settings.polish_interval
                and it % settings.polish_interval < settings.check_interval
                and it >= settings.polish_interval
            ):
                pol = _polish(problem, x_u, y_u, z_u, settings, cache)
                if pol is not None and pol[2] <= eps_pri and pol[3] <= eps_dua:
                    x_pol, y_pol, pri_res, dua_res = pol
                    status = SolveStatus.SOLVED
                    iterations = it
                    return QpSolution(
                        x=x_pol,
                        y=y_pol,
                        status=status,
                        primal_residual=pri_res,
                        dual_residual=dua_res,
                        iterations=iterations,
                        solve_time=time.perf_counter() - start,
                        objective=problem.objective(x_pol),
                        polished=True,
                    )
            if m and _primal_infeasible(problem, (E * (y - y_prev)) / c, settings.eps_infeasible):
                status = SolveStatus.PRIMAL_INFEASIBLE
                iterations = it
                break
            if _dual_infeasible(problem, D * (x - x_prev), settings.eps_infeasible):
                status = SolveStatus.DUAL_INFEASIBLE
                iterations = it
                break

        if m and it % settings.adaptive_rho_interval == 0 and it < settings.max_iter:
            new_rho = _adapt_rho(problem, D, E, c, x, y, z, rho_base, settings)
            if new_rho is not None:
                rho_base, rho_vec = new_rho
                factor = _factor_kkt_mat(cache.kkt_mat, cache.diag_pos, rho_vec, n=n)
                cache.rho_vec, cache.kkt = rho_vec, factor
                cache.rho_base = rho_base

    x_u = D * x
    y_u = (E * y) / c if m else np.zeros(0)
    z_u = z / E if m else np.zeros(0)
    polished = False
    if status == SolveStatus.SOLVED and settings.polish and settings.polish_final and m:
        pol = _polish(problem, x_u, y_u, z_u, settings, cache)
        if pol is not None:
            x_u, y_u, pri_res, dua_res = pol
            polished = True

    objective = problem.objective(x_u) if status in (SolveStatus.SOLVED, SolveStatus.MAX_ITER) else np.nan
    return QpSolution(
        x=x_u,
        y=y_u,
        status=status,
        primal_residual=pri_res,
        dual_residual=dua_res,
        iterations=iterations,
        solve_time=time.perf_counter() - start,
        objective=objective,
        polished=polished,
    )


def _adapt_rho(problem, D, E, c, x, y, z, rho_base, settings):
    """OSQP-style compounding penalty update from the relative primal and
    dual residual imbalance; returns (new base, new per-row rho) or None."""
    x_u = D * x
    y_u = (E * y) / c
    z_u = z / E
    Mx = problem.M @ x_u
    Px = problem.P @ x_u
    MTy = problem.M.T @ y_u
    den_p = max(np.linalg.norm(Mx, np.inf), np.linalg.norm(z_u, np.inf), 1e-10)
    den_d = max(
        np.linalg.norm(Px, np.inf), np.linalg.norm(MTy, np.inf), np.linalg.norm(problem.q, np.inf), 1e-10
    )
    r_p = np.linalg.norm(Mx - z_u, np.inf) / den_p
    r_d = np.linalg.norm(Px + problem.q + MTy, np.inf) / den_d
    ratio = np.sqrt(max(r_p, 1e-16) / max(r_d, 1e-16))
    if 0.2 < ratio < 5.0:
        return None
    base = float(np.clip(rho_base * ratio, _RHO_MIN, _RHO_MAX))
    new_rho, _ = _build_rho(problem.l, problem.u, base)
    return base, new_rho


def _primal_infeasible(problem, dy, eps):
    norm = np.linalg.norm(dy, np.inf)
    if norm < eps:
        return False
    dy = dy / norm
    if np.any((dy > eps) & (problem.u > _LOOSE)) or np.any((dy < -eps) & (problem.l < -_LOOSE)):
        return False
    u_term = np.where(problem.u > _LOOSE, 0.0, problem.u) @ np.maximum(dy, 0)
    l_term = np.where(problem.l < -_LOOSE, 0.0, problem.l) @ np.minimum(dy, 0)
    if u_term + l_term >= -eps:
        return False
    return np.linalg.norm(problem.M.T @ dy, np.inf) <= eps


def _dual_infeasible(problem, dx, eps):
    norm = np.linalg.norm(dx, np.inf)
    if norm < eps:
        return False
    dx = dx / norm
    if problem.q @ dx >= -eps:
        return False
    if np.linalg.norm(problem.P @ dx, np.inf) > eps:
        return False
    if problem.m == 0:
        return True
    Mdx = problem.M @ dx
    ok_up = np.all((Mdx <= eps) | (problem.u > _LOOSE))
    ok_lo = np.all((Mdx >= -eps) | (problem.l < -_LOOSE))
    return bool(ok_up and ok_lo)


def _polish(problem, x, y, z, settings, cache=None):
    """Active-set refinement seeded by the converged ADMM iterate.

    Solves the equality-constrained QP on the guessed active rows, then
    iterates: violated rows join the set, wrong-signed multipliers leave.
    Degenerate problems may need a few rounds. Returns None when no
    consistent active set is found within the round budget."""
    scale = 1.0 + np.abs(z)
    atol = 1e-6 * scale
    eq = _eq_mask(problem.l, problem.u)
    at_low = np.isfinite(problem.l) & (z - problem.l <= atol)
    at_upp = np.isfinite(problem.u) & (problem.u - z <= atol)
    act_low = (eq | ((y < 0) & at_low)).copy()
    act_upp = (((y > 0) & at_upp) & ~act_low).copy()
    if not np.any(act_low | act_upp):
        return None

    n = problem.n
    best = None
    if cache is not None and cache.M_csr is not None:
        M_csr = cache.M_csr
    else:
        M_csr = problem.M.tocsr()
        if cache is not None:
            cache.M_csr = M_csr
    P_dense = problem.P.toarray() if n <= 400 else None
    for _ in range(10):
        rows = np.where(act_low | act_upp)[0]
        M_act = M_csr[rows]
        bounds = np.where(act_low[rows], problem.l[rows], problem.u[rows])
        k = len(rows)
        delta = settings.polish_delta
        rhs = np.concatenate([-problem.q, bounds])
        if P_dense is not None and n + k <= 600:
            # dense path: small KKT systems factor faster without the
            # sparse assembly overhead
            K0 = np.zeros((n + k, n + k))
            K0[:n, :n] = P_dense
            Ma = M_act.toarray()
            K0[:n, n:] = Ma.T
            K0[n:, :n] = Ma
            K = K0.copy()
            K[:n, :n] += delta * np.eye(n)
            K[n:, n:] -= delta * np.eye(k)
            try:
                lu = sla.lu_factor(K)
            except (sla.LinAlgError, ValueError):
                return None
            sol = sla.lu_solve(lu, rhs)
            resid_prev = np.inf
            for _ in range(3):
                resid = rhs - K0 @ sol
                norm = float(np.abs(resid).max(initial=0.0))
                if norm >= resid_prev:
                    break
                resid_prev = norm
                sol = sol + sla.lu_solve(lu, resid)
        else:
            K = sp.bmat(
                [[problem.P + delta * sp.eye(n), M_act.T], [M_act, -delta * sp.eye(k)]], format="csc"
            )
            try:
                lu = spla.splu(K)
            except RuntimeError:
                return None
            sol = lu.solve(rhs)
            K0 = sp.bmat([[problem.P, M_act.T], [M_act, None]], format="csc")
            resid_prev = np.inf
            for _ in range(3):
                resid = rhs - K0 @ sol
                norm = float(np.abs(resid).max(initial=0.0))
                if norm >= resid_prev:
                    break
                resid_prev = norm
                sol = sol + lu.solve(resid)
        x_p = sol[:n]
        y_p = np.zeros(problem.m)
        y_p[rows] = sol[n:]

        sign_tol = 1e-8 * (1.0 + float(np.abs(y_p).max(initial=0.0)))
        bad_low = act_low & ~eq & (y_p > sign_tol)
        bad_upp = act_upp & (y_p < -sign_tol)

        Mx = problem.M @ x_p
        feas_tol = 1e-9 * scale
        viol_low = np.isfinite(problem.l) & (Mx < problem.l - feas_tol) & ~(act_low | act_upp)
        viol_upp = np.isfinite(problem.u) & (Mx > problem.u + feas_tol) & ~(act_low | act_upp)

        if not (np.any(bad_low) or np.any(bad_upp) or np.any(viol_low) or np.any(viol_upp)):
            pri = float(np.linalg.norm(Mx - np.clip(Mx, problem.l, problem.u), np.inf))
            dua = float(np.linalg.norm(problem.P @ x_p + problem.q + problem.M.T @ y_p, np.inf))
            Mx0 = problem.M @ x
            ref_pri = float(np.linalg.norm(Mx0 - np.clip(Mx0, problem.l, problem.u), np.inf))
            ref_dua = float(np.linalg.norm(problem.P @ x + problem.q + problem.M.T @ y, np.inf))
            if pri <= max(ref_pri, 1e-11) and dua <= max(ref_dua, 1e-11):
                return x_p, y_p, pri, dua
            return best
        act_low &= ~bad_low
        act_upp &= ~bad_upp
        act_low |= viol_low
        act_upp |= viol_upp
        if not np.any(act_low | act_upp):
            return best
    return best
