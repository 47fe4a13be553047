"""Closed-form stability oracles for generated fixtures.

These are independent of the QP pipeline: serial-chain structures are
statically determinate at every horizontal cut, so each cut can be
checked by a moment balance about the support polygon edge, with the
tension capacity of the snap-fit points taken uniformly at mu*F_0.
They are exact for single-chain fixtures whose offsets stay on one
horizontal axis with the other axis symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import Assembly
from .equilibrium import MaterialParams, connection_geometry
from .units import GRAVITY


@dataclass(frozen=True)
class CutCheck:
    upper_bricks: tuple[int, ...]
    demand: float  # N m, worst-edge tipping moment (positive = tipping)
    capacity: float  # N m
    edge: str  # "+x" | "-x" | "ground+x" | "ground-x"

    @property
    def ratio(self) -> float:
        if self.capacity <= 0:
            return np.inf if self.demand > 1e-15 else 0.0
        return self.demand / self.capacity


def chain_cut_checks(assembly: Assembly, params: MaterialParams | None = None) -> list[CutCheck]:
    """Moment checks for a single vertical chain resting on the ground.

    Bricks must form one serial chain ordered by height (each connected
    only to its vertical neighbors) with y-symmetric placement.
    """
    params = params or MaterialParams()
    order = sorted(assembly.bricks, key=lambda b: assembly.bricks[b].grid_pose[2])
    checks = []

    # ground cut: compression only, capacity zero beyond the base edge
    base = assembly.bricks[order[0]]
    lo, hi = assembly.grid_box(base)
    total_w = sum(assembly.bricks[b].mass for b in order) * GRAVITY
    com_x = sum(assembly.bricks[b].mass * assembly.bricks[b].com_world()[0] for b in order) / sum(
        assembly.bricks[b].mass for b in order
    )
    if not base.grounded:
        checks.append(CutCheck(tuple(order), total_w * (com_x - hi[0]), 0.0, "ground+x"))
        checks.append(CutCheck(tuple(order), total_w * (lo[0] - com_x), 0.0, "ground-x"))

    for idx in range(len(order) - 1):
        upper_ids = order[idx + 1:]
        conns = [
            c
            for c in assembly.graph.connections()
            if {c.stud_brick, c.hole_brick} == {order[idx], order[idx + 1]}
        ]
        if len(conns) != 1:
            raise ValueError("chain oracle expects exactly one connection per interface")
        conn = conns[0]
        geom = connection_geometry(conn, assembly.bricks[conn.hole_brick].world_pose, params)
        pts_x = geom.points[:, 0]

        lo_l, hi_l = assembly.grid_box(assembly.bricks[order[idx]])
        lo_u, hi_u = assembly.grid_box(assembly.bricks[order[idx + 1]])
        x0, x1 = max(lo_l[0], lo_u[0]), min(hi_l[0], hi_u[0])

        w_ab = sum(assembly.bricks[b].mass for b in upper_ids) * GRAVITY
        com_ab = sum(
            assembly.bricks[b].mass * assembly.bricks[b].com_world()[0] for b in upper_ids
        ) / sum(assembly.bricks[b].mass for b in upper_ids)

        cap_pos = params.mu * params.preload * float(np.sum(x1 - pts_x))
        cap_neg = params.mu * params.preload * float(np.sum(pts_x - x0))
        checks.append(CutCheck(tuple(upper_ids), w_ab * (com_ab - x1), cap_pos, "+x"))
        checks.append(CutCheck(tuple(upper_ids), w_ab * (x0 - com_ab), cap_neg, "-x"))
    return checks


@dataclass(frozen=True)
class ChainSummary:
    stable: bool
    cause: str | None
    friction_ratio: float  # worst tension-cut demand/capacity
    topple_margin: float  # signed COM excursion past the base edge / half width
    topple_excursion: float  # signed COM excursion past the base edge, meters


def chain_summary(assembly: Assembly, params: MaterialParams | None = None) -> ChainSummary:
    checks = chain_cut_checks(assembly, params)
    friction_ratio = 0.0
    topple_margin = -np.inf
    topple_excursion = -np.inf
    for c in checks:
        if c.capacity <= 0:
            base = assembly.bricks[min(assembly.bricks)]
            lo, hi = assembly.grid_box(base)
            half = (hi[0] - lo[0]) / 2
            total_w = sum(b.mass for b in assembly.bricks.values()) * GRAVITY
            topple_margin = max(topple_margin, c.demand / (total_w * half))
            topple_excursion = max(topple_excursion, c.demand / total_w)
        else:
            friction_ratio = max(friction_ratio, c.ratio)
    if topple_margin > 0:
        return ChainSummary(False, "toppling", friction_ratio, topple_margin, topple_excursion)
    if friction_ratio > 1.0:
        return ChainSummary(False, "friction-overload", friction_ratio, topple_margin, topple_excursion)
    return ChainSummary(True, None, friction_ratio, topple_margin, topple_excursion)


def chain_verdict(assembly: Assembly, params: MaterialParams | None = None) -> tuple[bool, str | None, float]:
    """(stable, cause, worst friction ratio) for a serial chain fixture."""
    s = chain_summary(assembly, params)
    return s.stable, s.cause, s.friction_ratio


def impact_cut_demand(
    assembly: Assembly,
    upper_ids: list[int],
    edge_x: float,
    drop_height: float,
    dt: float,
) -> float:
    """Impact-step tipping moment (N m) about a cut edge: the overhung
    bricks' momentum must be cancelled through the cut in one step."""
    accel = np.sqrt(2 * GRAVITY * drop_height) / dt + GRAVITY
    return sum(
        assembly.bricks[b].mass * accel * (assembly.bricks[b].com_world()[0] - edge_x)
        for b in upper_ids
    )


def connection_moment_capacity(assembly: Assembly, conn_id: int, edge_x: float, params: MaterialParams | None = None) -> float:
    """Uniform-tension moment capacity (N m) of one connection about a
    +x fulcrum edge."""
    params = params or MaterialParams()
    conn = assembly.graph.connection(conn_id)
    geom = connection_geometry(conn, assembly.bricks[conn.hole_brick].world_pose, params)
    return params.mu * params.preload * float(np.sum(edge_x - geom.points[:, 0]))
