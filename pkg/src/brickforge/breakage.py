"""Per-component force-distribution solves and the breakage rule.

The three-stage lexicographic relaxation:
  1. project the wrench targets b onto the reachable set {A x : G x >= 0},
  2. find the smallest per-connection relaxation v of the friction rows,
  3. minimize the elastic-energy surrogate under the relaxed constraints.

Each stage is a sparse QP in the canonical solver form. Matrices are
cached per component and reused (with warm starts) while the topology is
unchanged; only the right-hand sides move between steps.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .equilibrium import BrickState, EquilibriumSystem, MaterialParams
from .qp import AdmmSettings, FactorizationCache, QpProblem, SolveStatus, solve, stack_blocks
from .units import GRAVITY

STAGE3_PAD = 1e-9


class SolverFailure(RuntimeError):
    def __init__(self, stage, status):
        self.stage = stage
        self.status = status
        super().__init__(f"stage {stage} returned {status.value}")


@dataclass
class WrenchTargets:
    """Stacked per-free-brick wrench targets (force N, torque N m),
    ordered like EquilibriumSystem.free_bricks."""

    bricks: list[int]
    b: np.ndarray

    @staticmethod
    def zero(system: EquilibriumSystem) -> "WrenchTargets":
        return WrenchTargets(list(system.free_bricks), np.zeros(6 * len(system.free_bricks)))


def static_targets(states: dict[int, BrickState], system: EquilibriumSystem) -> WrenchTargets:
    """Gravity-cancelling targets: each free brick needs an internal
    wrench of +m g z-hat with zero torque about its own COM."""
    b = np.zeros(6 * len(system.free_bricks))
    for k, brick_id in enumerate(system.free_bricks):
        b[6 * k + 2] = states[brick_id].mass * GRAVITY
    return WrenchTargets(list(system.free_bricks), b)


@dataclass
class SolveOutcome:
    b: np.ndarray
    b_star: np.ndarray
    projection_residual: float
    v_star: dict[int, float]
    x_star: np.ndarray
    utilizations: dict[int, float]
    stresses: dict[int, float]
    timings_ms: dict[str, float]

    @property
    def max_relaxation(self) -> float:
        return max(self.v_star.values(), default=0.0)

    @property
    def max_utilization(self) -> float:
        return max(self.utilizations.values(), default=0.0)


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    cause: str | None  # "toppling" | "friction-overload" | None

    REL_PROJECTION_TOL = 1e-4
    RELAXATION_TOL = 1e-6
    # The energy-optimal distribution rides the friction bound (u == 1)
    # well before true capacity; u only exceeds 1 + solver noise when the
    # relaxation is engaged, so the u test needs an epsilon.
    UTILIZATION_TOL = 1e-6
    # Floor for the relative projection test. Desk-scale bricks weigh
    # ~0.02 N, so a 1 N floor would swallow real toppling gaps; polished
    # stable solves sit far below 1e-4 relative regardless.
    PROJECTION_SCALE_FLOOR = 0.01


def utilization(x: np.ndarray, system: EquilibriumSystem, conn_id: int) -> float:
    """Worst friction demand/capacity ratio over a connection's points.

    The denominator is clamped below to avoid blow-up when the solved
    radial force dips under the preload."""
    p = system.params
    geom = system.conn_geoms[conn_id]
    fa, fr, ft = geom.point_forces(x[system.conn_slices[conn_id]])
    demand = np.abs(ft) + fa
    capacity = np.maximum(p.mu * (fr + p.preload), 1e-12)
    return float(np.max(demand / capacity))


class LexicographicSolver:
    """Holds per-component stage problems, caches and warm starts."""

    def __init__(self, system: EquilibriumSystem, settings: AdmmSettings | None = None, polish: bool = True):
        self.system = system
        base = settings or AdmmSettings()
        # polish=True: static-analysis grade (machine-exact stage results).
        # polish=False keeps the mid-loop stall rescue but skips the final
        # polish and the tight stage-1 retry.
        self.exact = polish
        self.settings = AdmmSettings(
            eps_abs=base.eps_abs,
            eps_rel=base.eps_rel,
            max_iter=base.max_iter,
            rho=10.0,
            sigma=base.sigma,
            alpha=base.alpha,
            polish=True,
            polish_final=polish,
        )
        # The projection stage anchors everything downstream: a loose b*
        # either fakes instability or swallows real overloads, so stage 1
        # always runs at least at 1e-6.
        self._stage1_settings = AdmmSettings(
            eps_abs=min(base.eps_abs, 1e-6),
            eps_rel=min(base.eps_rel, 1e-6),
            max_iter=max(base.max_iter, 2000),
            rho=10.0,
            sigma=base.sigma,
            alpha=base.alpha,
            polish=True,
            polish_final=polish,
        )
        sysm = system
        n, K = sysm.n_x, sysm.n_connections
        nG, nH, mA = sysm.G.shape[0], sysm.H.shape[0], sysm.A.shape[0]

        ones = ("diag", np.ones(mA))
        # stage 1: minimize ||y - b||^2 over A x = y, G x >= 0, with y as
        # explicit variables so the projection error is not amplified by
        # the squared conditioning of A
        self._P1 = stack_blocks((n + mA, n + mA), [(n, n, ones)] if mA else [])
        self._M1 = stack_blocks(
            (mA + nG, n + mA),
            [(0, 0, sysm.A), (0, n, ("diag", -np.ones(mA))), (mA, 0, sysm.G)],
        )
        self._l1 = np.concatenate([np.zeros(mA), np.zeros(nG)])
        self._u1 = np.concatenate([np.zeros(mA), np.full(nG, np.inf)])
        self._cache1 = FactorizationCache()
        self._warm1 = None

        # stage 2: minimize ||v||^2 over A x = b*, G x >= 0, H x - S v <= 1, v >= 0
        self._P2 = stack_blocks((n + K, n + K), [(n, n, ("diag", np.ones(K)))])
        self._M2 = stack_blocks(
            (mA + nG + nH + K, n + K),
            [
                (0, 0, sysm.A),
                (mA, 0, sysm.G),
                (mA + nG, 0, sysm.H),
                (mA + nG, n, -sysm.S),
                (mA + nG + nH, n, ("diag", np.ones(K))),
            ],
        )
        self._q2 = np.zeros(n + K)
        self._cache2 = FactorizationCache()
        self._warm2 = None
        self._mA, self._nG, self._nH, self._K = mA, nG, nH, K

        # stage 3: minimize 0.5 x'Qx over A x = b*, G x >= 0, H x <= 1 + S v*
        self._P3 = sysm.Q
        self._M3 = stack_blocks(
            (mA + nG + nH, n), [(0, 0, sysm.A), (mA, 0, sysm.G), (mA + nG, 0, sysm.H)]
        )
        self._cache3 = FactorizationCache()
        self._warm3 = None

    def solve(self, targets: WrenchTargets) -> SolveOutcome:
        sysm = self.system
        n, K = sysm.n_x, sysm.n_connections
        mA, nG, nH = self._mA, self._nG, self._nH
        b = np.asarray(targets.b, dtype=float)
        timings = {}

        if n == 0 or (mA == 0 and K == 0):
            return self._trivial_outcome(b, timings)
        if float(np.abs(b).max(initial=0.0)) < 1e-14:
            # zero targets: x = 0 is optimal for every stage
            return self._zero_outcome(b, timings)

        # stage 1
        t0 = time.perf_counter()
        q1 = np.concatenate([np.zeros(n), -b])
        p1 = QpProblem(self._P1, q1, self._M1, self._l1, self._u1)
        s1 = solve(p1, self._stage1_settings, warm=self._warm1, cache=self._cache1)
        if s1.status != SolveStatus.SOLVED:
            raise SolverFailure(1, s1.status)
        if not s1.polished and self.exact:
            # retry tight: an unpolished projection is not accurate enough
            # to anchor the later stages or the toppling verdict
            tight = AdmmSettings(eps_abs=1e-9, eps_rel=1e-9, max_iter=20000)
            s1b = solve(p1, tight, warm=(s1.x, s1.y), cache=self._cache1)
            if s1b.status == SolveStatus.SOLVED:
                s1 = s1b
        self._warm1 = (s1.x, s1.y)
        x1 = s1.x[:n]
        b_star = sysm.A @ x1
        proj_residual = float(np.linalg.norm(b_star - b))
        # Stages 2/3 pin A x = b*; if the stage-1 point is not exactly
        # feasible (polish failed) they need matching slack to stay
        # feasible themselves.
        g_viol = max(0.0, -float((sysm.G @ x1).min(initial=0.0)))
        if s1.polished:
            eq_slack = 0.0
        elif self.exact:
            eq_slack = max(1e-9, 1e2 * g_viol)
        else:
            eq_slack = max(1e-9, 2.0 * g_viol, 1e-7 * max(1.0, float(np.abs(b_star).max(initial=0.0))))
        timings["stage1_ms"] = (time.perf_counter() - t0) * 1e3

        # stage 2
        t0 = time.perf_counter()
        warm2 = self._warm2
        if warm2 is None:
            warm2 = (np.concatenate([x1, np.zeros(K)]), np.zeros(self._M2.shape[0]))
        s2 = None
        for attempt in range(3):
            l2 = np.concatenate([b_star - eq_slack, np.full(nG, -eq_slack), np.full(nH, -np.inf), np.zeros(K)])
            u2 = np.concatenate([b_star + eq_slack, np.full(nG, np.inf), np.ones(nH) + eq_slack, np.full(K, np.inf)])
            p2 = QpProblem(self._P2, self._q2, self._M2, l2, u2)
            s2 = solve(p2, self.settings, warm=warm2, cache=self._cache2)
            if s2.status == SolveStatus.SOLVED:
                break
            # A stalled stage 2 is almost always b* being epsilon-outside
            # the exactly-feasible set; widen by the observed gap.
            if s2.status == SolveStatus.MAX_ITER or s2.status == SolveStatus.PRIMAL_INFEASIBLE:
                eq_slack = max(eq_slack * 10, 3.0 * s2.primal_residual, 1e-8)
                warm2 = (s2.x, s2.y)
            else:
                break
        if s2.status != SolveStatus.SOLVED:
            raise SolverFailure(2, s2.status)
        self._warm2 = (s2.x, s2.y)
        v_star = np.maximum(s2.x[n:], 0.0)
        timings["stage2_ms"] = (time.perf_counter() - t0) * 1e3

        # stage 3
        t0 = time.perf_counter()
        warm3 = self._warm3 if self._warm3 is not None else (s2.x[:n], np.zeros(self._M3.shape[0]))
        pad = STAGE3_PAD
        s3 = None
        for attempt in range(3):
            h_upper = 1.0 + (sysm.S @ v_star) + pad + eq_slack
            l3 = np.concatenate([b_star - eq_slack, np.full(nG, -eq_slack), np.full(nH, -np.inf)])
            u3 = np.concatenate([b_star + eq_slack, np.full(nG, np.inf), h_upper])
            p3 = QpProblem(self._P3, np.zeros(n), self._M3, l3, u3)
            s3 = solve(p3, self.settings, warm=warm3, cache=self._cache3)
            if s3.status == SolveStatus.SOLVED:
                break
            if s3.status in (SolveStatus.MAX_ITER, SolveStatus.PRIMAL_INFEASIBLE):
                grow = max(eq_slack * 10, 3.0 * s3.primal_residual, 1e-8)
                eq_slack = grow
                pad = max(pad, grow)
                warm3 = (s3.x, s3.y)
            else:
                break
        if s3.status != SolveStatus.SOLVED:
            raise SolverFailure(3, s3.status)
        self._warm3 = (s3.x, s3.y)
        x_star = s3.x
        timings["stage3_ms"] = (time.perf_counter() - t0) * 1e3

        v_map = {cid: float(v_star[k]) for k, cid in enumerate(sysm.conn_order)}
        utils = {cid: utilization(x_star, sysm, cid) for cid in sysm.conn_order}
        return SolveOutcome(
            b=b,
            b_star=b_star,
            projection_residual=proj_residual,
            v_star=v_map,
            x_star=x_star,
            utilizations=utils,
            stresses=_stresses(sysm, utils),
            timings_ms=timings,
        )

    def _trivial_outcome(self, b, timings):
        # No variables: the only reachable target is zero.
        sysm = self.system
        utils = {cid: 0.0 for cid in sysm.conn_order}
        b_star = np.zeros_like(b)
        return SolveOutcome(
            b=b,
            b_star=b_star,
            projection_residual=float(np.linalg.norm(b - b_star)),
            v_star={cid: 0.0 for cid in sysm.conn_order},
            x_star=np.zeros(sysm.n_x),
            utilizations=utils,
            stresses=_stresses(sysm, utils),
            timings_ms=timings,
        )

    def _zero_outcome(self, b, timings):
        # Zero targets: x = 0 is feasible and optimal for every stage.
        sysm = self.system
        utils = {cid: 0.0 for cid in sysm.conn_order}
        return SolveOutcome(
            b=b,
            b_star=b.copy(),
            projection_residual=0.0,
            v_star={cid: 0.0 for cid in sysm.conn_order},
            x_star=np.zeros(sysm.n_x),
            utilizations=utils,
            stresses=_stresses(sysm, utils),
            timings_ms=timings,
        )


def _stresses(system: EquilibriumSystem, utils: dict[int, float]) -> dict[int, float]:
    out = {}
    for cid in system.conn_order:
        geom = system.conn_geoms[cid]
        for b in (geom.stud_brick, geom.hole_brick):
            out[b] = max(out.get(b, 0.0), utils[cid])
    return {b: min(1.0, u) for b, u in out.items()}


def lexicographic_solve(
    system: EquilibriumSystem,
    targets: WrenchTargets,
    settings: AdmmSettings | None = None,
    polish: bool = True,
) -> SolveOutcome:
    """One-shot solve without persistent caches."""
    return LexicographicSolver(system, settings, polish=polish).solve(targets)


def stability_verdict(outcome: SolveOutcome) -> StabilityVerdict:
    scale = max(StabilityVerdict.PROJECTION_SCALE_FLOOR, float(np.linalg.norm(outcome.b)))
    if outcome.projection_residual > StabilityVerdict.REL_PROJECTION_TOL * scale:
        return StabilityVerdict(False, "toppling")
    if (
        outcome.max_relaxation > StabilityVerdict.RELAXATION_TOL
        or outcome.max_utilization > 1.0 + StabilityVerdict.UTILIZATION_TOL
    ):
        return StabilityVerdict(False, "friction-overload")
    return StabilityVerdict(True, None)


@dataclass(frozen=True)
class BreakEvent:
    step: int
    component: int
    connection_ids: tuple[int, ...]
    worst: int
    utilizations: dict[int, float]


def detect_and_break(
    component_anchor: int,
    outcome: SolveOutcome,
    graph,
    step: int = 0,
    tol: float = 1e-6,
) -> list[BreakEvent]:
    """Break the minimal disconnecting set around the most overloaded
    connection; at most one breakage set per component per step.

    `tol` keeps solver noise at the friction bound (where u sits exactly
    at 1 while still feasible) from triggering spurious breaks."""
    overloaded = {cid for cid, u in outcome.utilizations.items() if u > 1.0 + tol}
    if not overloaded:
        return []
    worst = min(overloaded, key=lambda cid: (-outcome.utilizations[cid], cid))
    to_break = graph.minimal_breakage_set(overloaded, worst)
    graph.remove_connections(sorted(to_break))
    return [
        BreakEvent(
            step=step,
            component=component_anchor,
            connection_ids=tuple(sorted(to_break)),
            worst=worst,
            utilizations={cid: outcome.utilizations[cid] for cid in sorted(to_break)},
        )
    ]
