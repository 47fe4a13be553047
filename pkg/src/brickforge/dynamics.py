"""Desk-scale rigid-body dynamics.

Each connected component is one rigid body (the topology graph fixes the
relative poses, so no internal constraints are needed). A step applies
gravity, resolves contacts with a sequential impulse solver, integrates,
runs the assembly monitor over contacting interface pairs, extracts
per-brick wrench targets from the booked impulses, and runs the breakage
detector per component.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import collision, monitor
from .assembly import Assembly
from .breakage import (
    BreakEvent,
    LexicographicSolver,
    WrenchTargets,
    detect_and_break,
    stability_verdict,
)
from .equilibrium import BrickState, MaterialParams, build_system
from .monitor import SnapTolerances
from .qp import AdmmSettings
from .topology import Connection
from .transforms import Transform, matrix_to_quat, quat_integrate, quat_to_matrix
from .units import GRAVITY, MM, UNITS

BREAK_TOL = 1e-2  # utilization slack before a connection counts as overloaded


class NonFiniteState(RuntimeError):
    pass


@dataclass(frozen=True)
class SimParams:
    dt: float = 1.0 / 240.0
    gravity: float = GRAVITY
    contact_mu: float = 0.5
    restitution: float = 0.1
    restitution_threshold: float = 0.05  # m/s approach speed before bounce
    position_correction: float = 0.2
    slop: float = 1e-4  # 0.1 mm
    velocity_iterations: int = 10
    sleep_linear: float = 2e-3  # m/s
    sleep_angular: float = 0.05  # rad/s
    sleep_time: float = 0.1  # s


@dataclass
class ComponentBody:
    body_id: int  # anchor brick id
    brick_ids: list[int]
    local_poses: dict[int, Transform]  # brick frame in body frame
    total_mass: float
    com_local: np.ndarray
    inertia_local: np.ndarray  # about the COM, body frame
    position: np.ndarray  # body frame origin, world
    quat: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sleeping: bool = False
    sleep_timer: float = 0.0

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def pose(self) -> Transform:
        return Transform(self.rotation(), self.position)

    def com_world(self) -> np.ndarray:
        return self.pose().apply(self.com_local)

    def inertia_world(self) -> np.ndarray:
        R = self.rotation()
        return R @ self.inertia_local @ R.T

    def velocity_at(self, point: np.ndarray) -> np.ndarray:
        return self.vel + np.cross(self.omega, point - self.com_world())

    def apply_impulse(self, impulse: np.ndarray, point: np.ndarray) -> None:
        self.vel = self.vel + impulse / self.total_mass
        self.omega = self.omega + np.linalg.solve(self.inertia_world(), np.cross(point - self.com_world(), impulse))


@dataclass
class StepRecord:
    step: int
    dt: float
    impulses: dict[int, tuple[np.ndarray, np.ndarray]]  # brick -> (J, H about own COM)
    pre_twist: dict[int, tuple[np.ndarray, np.ndarray]]  # body -> (v, omega)
    post_twist: dict[int, tuple[np.ndarray, np.ndarray]]
    contact_pairs: list[tuple[int, int, float]]  # (brick_a, brick_b, normal impulse)
    assembly_events: list[dict]
    break_events: list[BreakEvent]
    engine_ms: float = 0.0
    brd_ms: float = 0.0


class World:
    def __init__(
        self,
        assembly: Assembly,
        params: SimParams | None = None,
        material: MaterialParams | None = None,
        tolerances: SnapTolerances | None = None,
        ignore_grounded: bool = False,
    ):
        self.assembly = assembly
        self.params = params or SimParams()
        self.material = material or MaterialParams()
        self.tolerances = tolerances or SnapTolerances()
        self.ignore_grounded = ignore_grounded
        self.step_index = 0
        self.bodies: dict[int, ComponentBody] = {}
        self._solvers: dict[int, tuple[int, object, object]] = {}  # anchor -> (version, system, solver)
        self._brd_settings = AdmmSettings(eps_abs=1e-3, eps_rel=1e-3, max_iter=800, polish_final=False)
        self.rebuild_bodies()

    # -- body construction -------------------------------------------------

    def _body_grounded(self, brick_ids) -> bool:
        if self.ignore_grounded:
            return False
        return any(self.assembly.bricks[b].grounded for b in brick_ids)

    def rebuild_bodies(self, inherit: dict[int, ComponentBody] | None = None) -> None:
        """Create one rigid body per component. When `inherit` maps brick
        ids to their previous body, fragments take over the rigid-field
        velocity evaluated at their own COM."""
        self.bodies = {}
        for comp in self.assembly.graph.components():
            anchor = min(comp)
            local = {bid: self.assembly.graph.pose_in_component(bid) for bid in comp}
            anchor_pose = self.assembly.bricks[anchor].world_pose
            body = self._make_body(anchor, sorted(comp), local, anchor_pose)
            if inherit:
                parent = inherit.get(anchor) or next(
                    (inherit[b] for b in sorted(comp) if b in inherit), None
                )
                if parent is not None:
                    body.vel = parent.velocity_at(body.com_world())
                    body.omega = parent.omega.copy()
            self.bodies[anchor] = body
        self._sync_brick_poses()

    def _make_body(self, anchor, brick_ids, local, anchor_pose) -> ComponentBody:
        masses = {b: self.assembly.bricks[b].mass for b in brick_ids}
        total = sum(masses.values())
        com_local = sum(
            masses[b] * local[b].apply(self.assembly.bricks[b].type.com_local) for b in brick_ids
        ) / total
        inertia = np.zeros((3, 3))
        for b in brick_ids:
            bt = self.assembly.bricks[b].type
            R = local[b].R
            I_b = R @ bt.inertia_local() @ R.T
            r = local[b].apply(bt.com_local) - com_local
            inertia += I_b + masses[b] * ((r @ r) * np.eye(3) - np.outer(r, r))
        return ComponentBody(
            body_id=anchor,
            brick_ids=list(brick_ids),
            local_poses=dict(local),
            total_mass=total,
            com_local=com_local,
            inertia_local=inertia,
            position=anchor_pose.t.copy(),
            quat=matrix_to_quat(anchor_pose.R),
        )

    def _sync_brick_poses(self) -> None:
        for body in self.bodies.values():
            pose = body.pose()
            for bid in body.brick_ids:
                self.assembly.bricks[bid].world_pose = pose @ body.local_poses[bid]

    def brick_body(self, brick_id: int) -> ComponentBody:
        return self.bodies[self.assembly.graph.anchor_of(brick_id)]

    def collision_box(self, brick_id: int) -> collision.Obb:
        brick = self.assembly.bricks[brick_id]
        bt = brick.type
        size = bt.size_m.copy()
        if bt.has_stud_interface:
            # studs extend the proxy upward by the pre-engagement height
            size[2] += UNITS.H_S * MM
        half = size / 2
        center_local = np.array([bt.size_m[0] / 2, bt.size_m[1] / 2, size[2] / 2])
        pose = brick.world_pose
        return collision.Obb(pose.apply(center_local), pose.R.copy(), half)

    # -- stepping -----------------------------------------------------------

    def step(self) -> StepRecord:
        t_start = time.perf_counter()
        p = self.params
        dt = p.dt
        record = StepRecord(
            step=self.step_index,
            dt=dt,
            impulses={bid: (np.zeros(3), np.zeros(3)) for bid in self.assembly.bricks},
            pre_twist={},
            post_twist={},
            contact_pairs=[],
            assembly_events=[],
            break_events=[],
        )

        awake = [b for b in self._ordered_bodies() if not b.sleeping and not self._body_grounded(b.brick_ids)]
        for body in awake:
            record.pre_twist[body.body_id] = (body.vel.copy(), body.omega.copy())
            body.vel = body.vel + np.array([0.0, 0.0, -p.gravity * dt])
            for bid in body.brick_ids:
                J, H = record.impulses[bid]
                J += np.array([0.0, 0.0, -self.assembly.bricks[bid].mass * p.gravity * dt])

        contacts = self._detect_contacts()
        self._wake_on_contact(contacts)
        # gravity for bodies woken this step
        for body in self._ordered_bodies():
            if body.sleeping or self._body_grounded(body.brick_ids) or body.body_id in record.pre_twist:
                continue
            record.pre_twist[body.body_id] = (body.vel.copy(), body.omega.copy())
            body.vel = body.vel + np.array([0.0, 0.0, -p.gravity * dt])
            for bid in body.brick_ids:
                J, H = record.impulses[bid]
                J += np.array([0.0, 0.0, -self.assembly.bricks[bid].mass * p.gravity * dt])

        pair_impulse = self._solve_contacts(contacts, record)
        self._integrate(record)
        self._position_correction(contacts)
        self._sync_brick_poses()
        self._asm_pass(contacts, pair_impulse, record)

        for body in self._ordered_bodies():
            if body.body_id in record.pre_twist:
                record.post_twist[body.body_id] = (body.vel.copy(), body.omega.copy())
        self._update_sleep(record)
        engine_ms = (time.perf_counter() - t_start) * 1e3

        t_brd = time.perf_counter()
        self._brd_pass(record)
        record.brd_ms = (time.perf_counter() - t_brd) * 1e3
        record.engine_ms = engine_ms

        self._check_finite()
        self.step_index += 1
        return record

    def _ordered_bodies(self):
        return [self.bodies[k] for k in sorted(self.bodies)]

    def _detect_contacts(self):
        """(brick_a, brick_b | None for ground, contact points) between
        different bodies, deterministic order."""
        p = self.params
        out = []
        boxes = {}
        bounds = {}
        for bid in sorted(self.assembly.bricks):
            box = self.collision_box(bid)
            boxes[bid] = box
            corners = box.corners()
            bounds[bid] = (corners.min(axis=0) - 1e-6, corners.max(axis=0) + 1e-6)
        ids = sorted(self.assembly.bricks)
        anchors = {bid: self.assembly.graph.anchor_of(bid) for bid in ids}
        for i, bid in enumerate(ids):
            lo, hi = bounds[bid]
            if lo[2] < 1e-6:
                pts = collision.ground_contacts(boxes[bid])
                if pts:
                    out.append((None, bid, pts))
            for other in ids[i + 1:]:
                if anchors[bid] == anchors[other]:
                    continue
                lo_b, hi_b = bounds[other]
                if np.any(lo > hi_b) or np.any(lo_b > hi):
                    continue
                pts = collision.box_box_contacts(boxes[bid], boxes[other])
                if pts:
                    out.append((bid, other, pts))
        return out

    def _wake_on_contact(self, contacts):
        for a, b, pts in contacts:
            body_b = self.brick_body(b)
            body_a = self.brick_body(a) if a is not None else None
            if body_a is None:
                continue
            if body_a.sleeping != body_b.sleeping:
                moving = body_b if body_a.sleeping else body_a
                if np.linalg.norm(moving.vel) > self.params.sleep_linear * 2:
                    body_a.sleeping = body_b.sleeping = False
                    body_a.sleep_timer = body_b.sleep_timer = 0.0

    def _solve_contacts(self, contacts, record):
        """Sequential impulses with restitution and a friction pyramid;
        returns accumulated normal impulse per brick pair.

        Body velocities are mirrored into flat scalar state for the inner
        loop; numpy allocation per impulse would dominate the step."""
        p = self.params
        state = {}  # body_id -> [vx, vy, vz, wx, wy, wz]
        meta = {}  # body_id -> (inv_mass, inv_inertia, com)

        def body_state(body):
            if body.body_id not in state:
                state[body.body_id] = [*body.vel, *body.omega]
                meta[body.body_id] = (
                    1.0 / body.total_mass,
                    np.linalg.inv(body.inertia_world()),
                    body.com_world(),
                )
            return state[body.body_id]

        def _rel_velocity(con, tag):
            d = con[f"d_{tag}"]
            out = 0.0
            if con["sb"] is not None:
                s = con["sb"]
                rxd, _ = con[f"rxd_{tag}_b"]
                out += s[0] * d[0] + s[1] * d[1] + s[2] * d[2] + s[3] * rxd[0] + s[4] * rxd[1] + s[5] * rxd[2]
            if con["sa"] is not None:
                s = con["sa"]
                rxd, _ = con[f"rxd_{tag}_a"]
                out -= s[0] * d[0] + s[1] * d[1] + s[2] * d[2] + s[3] * rxd[0] + s[4] * rxd[1] + s[5] * rxd[2]
            return out

        def _apply(con, tag, dj):
            d = con[f"d_{tag}"]
            if con["sa"] is not None:
                s = con["sa"]
                inv_m = con["inv_m_a"]
                rxd, w_term = con[f"rxd_{tag}_a"]
                s[0] -= dj * d[0] * inv_m
                s[1] -= dj * d[1] * inv_m
                s[2] -= dj * d[2] * inv_m
                s[3] -= dj * w_term[0]
                s[4] -= dj * w_term[1]
                s[5] -= dj * w_term[2]
            if con["sb"] is not None:
                s = con["sb"]
                inv_m = con["inv_m_b"]
                rxd, w_term = con[f"rxd_{tag}_b"]
                s[0] += dj * d[0] * inv_m
                s[1] += dj * d[1] * inv_m
                s[2] += dj * d[2] * inv_m
                s[3] += dj * w_term[0]
                s[4] += dj * w_term[1]
                s[5] += dj * w_term[2]

        constraints = []
        for a, b, pts in contacts:
            body_a = self.brick_body(a) if a is not None else None
            body_b = self.brick_body(b)
            static_a = body_a is None or body_a.sleeping or self._body_grounded(body_a.brick_ids)
            static_b = body_b.sleeping or self._body_grounded(body_b.brick_ids)
            if static_a and static_b:
                continue
            sa = None if static_a else body_state(body_a)
            sb = None if static_b else body_state(body_b)
            for pt in pts:
                n = pt.normal
                t1 = np.cross(n, [1.0, 0.0, 0.0])
                if t1 @ t1 < 1e-12:
                    t1 = np.cross(n, [0.0, 1.0, 0.0])
                t1 = t1 / np.linalg.norm(t1)
                t2 = np.cross(n, t1)
                con = {"a": a, "b": b, "sa": sa, "sb": sb, "point": pt.position, "jn": 0.0, "jt1": 0.0, "jt2": 0.0}
                con["inv_m_a"] = meta[body_a.body_id][0] if sa is not None else 0.0
                con["inv_m_b"] = meta[body_b.body_id][0] if sb is not None else 0.0
                # per-direction precomputation: the velocity jacobians
                # (r x d) and I^-1 (r x d)
                for tag, d in (("n", n), ("t1", t1), ("t2", t2)):
                    k = 0.0
                    for skey, body in (("a", body_a), ("b", body_b)):
                        if (skey == "a" and static_a) or (skey == "b" and static_b):
                            con[f"rxd_{tag}_{skey}"] = None
                            continue
                        inv_m, inv_I, com = meta[body.body_id]
                        r = pt.position - com
                        rxd = np.cross(r, d)
                        w_term = inv_I @ rxd
                        k += inv_m + float(rxd @ w_term)
                        con[f"rxd_{tag}_{skey}"] = (rxd, w_term)
                    con[f"k_{tag}"] = k
                    con[f"d_{tag}"] = d
                # restitution from the pre-solve approach speed
                v_n = _rel_velocity(con, "n")
                con["bias"] = -p.restitution * v_n if v_n < -p.restitution_threshold else 0.0
                constraints.append(con)

        for _ in range(p.velocity_iterations):
            for con in constraints:
                v_n = _rel_velocity(con, "n")
                d_jn = -(v_n - con["bias"]) / con["k_n"]
                new_jn = con["jn"] + d_jn
                if new_jn < 0.0:
                    new_jn = 0.0
                d_jn = new_jn - con["jn"]
                con["jn"] = new_jn
                if d_jn != 0.0:
                    _apply(con, "n", d_jn)
            for con in constraints:
                max_f = p.contact_mu * con["jn"]
                for tag, jkey in (("t1", "jt1"), ("t2", "jt2")):
                    v_t = _rel_velocity(con, tag)
                    d_jt = -v_t / con[f"k_{tag}"]
                    new_jt = con[jkey] + d_jt
                    if new_jt > max_f:
                        new_jt = max_f
                    elif new_jt < -max_f:
                        new_jt = -max_f
                    d_jt = new_jt - con[jkey]
                    con[jkey] = new_jt
                    if d_jt != 0.0:
                        _apply(con, tag, d_jt)

        # write the mirrored velocities back
        for body in self._ordered_bodies():
            if body.body_id in state:
                s = state[body.body_id]
                body.vel = np.array(s[:3])
                body.omega = np.array(s[3:])

        pair_impulse: dict[tuple, float] = {}
        for con in constraints:
            impulse = con["jn"] * con["d_n"] + con["jt1"] * con["d_t1"] + con["jt2"] * con["d_t2"]
            for bid, sign in ((con["a"], -1.0), (con["b"], 1.0)):
                if bid is None:
                    continue
                J, H = record.impulses[bid]
                J += sign * impulse
                com = self.assembly.bricks[bid].com_world()
                H += np.cross(con["point"] - com, sign * impulse)
            key = (con["a"], con["b"])
            pair_impulse[key] = pair_impulse.get(key, 0.0) + con["jn"]
            record.contact_pairs.append((con["a"] if con["a"] is not None else -1, con["b"], con["jn"]))
        return pair_impulse

    def _integrate(self, record):
        dt = self.params.dt
        for body in self._ordered_bodies():
            if body.body_id not in record.pre_twist:
                continue
            com_before = body.com_world()
            com_after = com_before + body.vel * dt
            new_quat = quat_integrate(body.quat, body.omega, dt)
            R = quat_to_matrix(new_quat)
            body.quat = new_quat
            body.position = com_after - R @ body.com_local

    def _position_correction(self, contacts):
        p = self.params
        for a, b, pts in contacts:
            body_a = self.brick_body(a) if a is not None else None
            body_b = self.brick_body(b)
            static_a = body_a is None or body_a.sleeping or self._body_grounded(body_a.brick_ids)
            static_b = body_b.sleeping or self._body_grounded(body_b.brick_ids)
            if static_a and static_b:
                continue
            inv_a = 0.0 if static_a else 1.0 / body_a.total_mass
            inv_b = 0.0 if static_b else 1.0 / body_b.total_mass
            inv_sum = inv_a + inv_b
            if inv_sum <= 0:
                continue
            worst = max(pts, key=lambda pt: pt.depth)
            push = p.position_correction * max(worst.depth - p.slop, 0.0)
            if push <= 0:
                continue
            if not static_a:
                body_a.position = body_a.position - worst.normal * push * (inv_a / inv_sum)
            if not static_b:
                body_b.position = body_b.position + worst.normal * push * (inv_b / inv_sum)

    def _asm_pass(self, contacts, pair_impulse, record):
        """Snap-detect contacting interface pairs, gate on compressive
        impulse, commit engagements and merge bodies."""
        p = self.params
        candidates = []
        for a, b, pts in contacts:
            if a is None:
                continue
            for cand in monitor.candidate_pairs(
                self.assembly.bricks[a], self.assembly.bricks[b], self.tolerances
            ):
                if not cand.accepted:
                    continue
                stud_up = self.assembly.bricks[cand.stud_iface.owner].world_pose.R[:, 2]
                impulse = pair_impulse.get((a, b), 0.0)
                normal_along_stud = impulse * abs(float(pts[0].normal @ stud_up)) if pts else 0.0
                if monitor.force_gate(normal_along_stud, p.dt, self.tolerances):
                    candidates.append(cand)
        for cand in candidates:
            stud_brick = self.assembly.bricks[cand.stud_iface.owner]
            hole_brick = self.assembly.bricks[cand.hole_iface.owner]
            if self.assembly.graph.anchor_of(stud_brick.id) == self.assembly.graph.anchor_of(hole_brick.id):
                continue  # merged already by an earlier candidate this step
            edge_t = monitor.exact_edge_transform(
                cand.stud_iface, cand.hole_iface, cand.offset, cand.psi
            )
            desired = stud_brick.world_pose @ edge_t
            correction = desired @ hole_brick.world_pose.inverse()
            hole_body = self.brick_body(hole_brick.id)
            pose = correction @ hole_body.pose()
            hole_body.position = pose.t
            hole_body.quat = matrix_to_quat(pose.R)
            self._sync_brick_poses()
            conn = self.assembly.commit(cand, move="none")
            record.assembly_events.append(
                {
                    "type": "assembly",
                    "step": self.step_index,
                    "connection": conn.id,
                    "stud": stud_brick.id,
                    "hole": hole_brick.id,
                }
            )
        if candidates:
            self._merge_bodies()

    def _merge_bodies(self):
        """Rebuild bodies after topology changes, conserving momentum."""
        old = {}
        for body in self.bodies.values():
            for bid in body.brick_ids:
                old[bid] = body
        groups: dict[int, list[ComponentBody]] = {}
        for comp in self.assembly.graph.components():
            anchor = min(comp)
            groups[anchor] = sorted({id(old[b]): old[b] for b in comp if b in old}.values(), key=lambda x: x.body_id)
        self.rebuild_bodies()
        for anchor, parents in groups.items():
            if anchor not in self.bodies or not parents:
                continue
            body = self.bodies[anchor]
            if len(parents) == 1:
                p0 = parents[0]
                body.vel = p0.velocity_at(body.com_world())
                body.omega = p0.omega.copy()
                continue
            total = sum(p.total_mass for p in parents)
            vel = sum(p.total_mass * p.vel for p in parents) / total
            com = body.com_world()
            L = np.zeros(3)
            for par in parents:
                L += par.inertia_world() @ par.omega
                L += par.total_mass * np.cross(par.com_world() - com, par.vel - vel)
            body.vel = vel
            body.omega = np.linalg.solve(body.inertia_world(), L)

    def _update_sleep(self, record):
        p = self.params
        for body in self._ordered_bodies():
            if body.sleeping or self._body_grounded(body.brick_ids):
                continue
            slow = (
                np.linalg.norm(body.vel) < p.sleep_linear
                and np.linalg.norm(body.omega) < p.sleep_angular
            )
            if slow:
                body.sleep_timer += p.dt
                if body.sleep_timer >= p.sleep_time:
                    body.sleeping = True
                    body.vel[:] = 0.0
                    body.omega[:] = 0.0
            else:
                body.sleep_timer = 0.0

    # -- breakage -----------------------------------------------------------

    def extract_wrench_targets(self, record: StepRecord, body: ComponentBody) -> WrenchTargets:
        """Per-brick Eq-of-motion targets: momentum change minus booked
        external impulses, divided by dt, in world coordinates."""
        dt = record.dt
        v_pre, w_pre = record.pre_twist[body.body_id]
        v_post, w_post = record.post_twist[body.body_id]
        com = body.com_world()
        R_post = body.rotation()
        # pre-step rotation reconstructed by reverse integration
        q_pre = quat_integrate(body.quat, -w_post, dt)
        R_pre = quat_to_matrix(q_pre)
        bricks = []
        b = np.zeros(6 * len(body.brick_ids))
        for k, bid in enumerate(sorted(body.brick_ids)):
            brick = self.assembly.bricks[bid]
            r = brick.com_world() - com
            v_i_post = v_post + np.cross(w_post, r)
            v_i_pre = v_pre + np.cross(w_pre, r)
            R_local = body.local_poses[bid].R
            I_local = brick.type.inertia_local()
            I_post = (R_post @ R_local) @ I_local @ (R_post @ R_local).T
            I_pre = (R_pre @ R_local) @ I_local @ (R_pre @ R_local).T
            J, H = record.impulses[bid]
            b[6 * k: 6 * k + 3] = (brick.mass * (v_i_post - v_i_pre) - J) / dt
            b[6 * k + 3: 6 * k + 6] = (I_post @ w_post - I_pre @ w_pre - H) / dt
            bricks.append(bid)
        return WrenchTargets(bricks, b)

    def _brd_pass(self, record: StepRecord):
        graph = self.assembly.graph
        for body in self._ordered_bodies():
            if len(body.brick_ids) < 2 or body.sleeping:
                continue
            if body.body_id not in record.post_twist:
                continue
            anchor = body.body_id
            version = graph.version
            cached = self._solvers.get(anchor)
            if cached is None or cached[0] != version:
                states = {
                    bid: BrickState(
                        brick_id=bid,
                        pose=body.local_poses[bid],
                        mass=self.assembly.bricks[bid].mass,
                        size=self.assembly.bricks[bid].type.size_m,
                        grounded=False,
                    )
                    for bid in body.brick_ids
                }
                conns = [
                    c
                    for c in graph.connections()
                    if c.stud_brick in states and c.hole_brick in states
                ]
                system = build_system(states, conns, self.material, with_ground=False)
                solver = LexicographicSolver(system, self._brd_settings, polish=False)
                cached = (version, system, solver)
                self._solvers[anchor] = cached
            _, system, solver = cached
            targets_world = self.extract_wrench_targets(record, body)
            # rotate into the body frame the system was built in
            Rt = body.rotation().T
            b = targets_world.b.copy()
            order = {bid: k for k, bid in enumerate(sorted(body.brick_ids))}
            rotated = np.zeros(6 * len(system.free_bricks))
            for k, bid in enumerate(system.free_bricks):
                src = order[bid]
                rotated[6 * k: 6 * k + 3] = Rt @ b[6 * src: 6 * src + 3]
                rotated[6 * k + 3: 6 * k + 6] = Rt @ b[6 * src + 3: 6 * src + 6]
            outcome = solver.solve(WrenchTargets(list(system.free_bricks), rotated))
            events = detect_and_break(anchor, outcome, graph, step=self.step_index, tol=BREAK_TOL)
            if events:
                record.break_events.extend(events)
                self._solvers.pop(anchor, None)
        if record.break_events:
            old = dict(self.bodies)
            inherit = {}
            for body in old.values():
                for bid in body.brick_ids:
                    inherit[bid] = body
            self.rebuild_bodies(inherit=inherit)

    def _check_finite(self):
        for body in self.bodies.values():
            if not (
                np.all(np.isfinite(body.position))
                and np.all(np.isfinite(body.vel))
                and np.all(np.isfinite(body.omega))
                and np.all(np.isfinite(body.quat))
            ):
                raise NonFiniteState(f"body {body.body_id} left the finite realm at step {self.step_index}")


@dataclass
class TrajectoryFrame:
    step: int
    t: float
    bodies: list[dict]
    events: list[dict]

    def to_dict(self) -> dict:
        return {"step": self.step, "t": self.t, "bodies": self.bodies, "events": self.events}


@dataclass
class DropTestResult:
    frames: list[TrajectoryFrame]
    break_events: list[BreakEvent]
    assembly_events: list[dict]
    timings: list[tuple[int, float, float]]  # (step, engine_ms, brd_ms)
    aborted: bool = False

    @property
    def final_components(self) -> int:
        return 0 if not self.frames else len(self.frames[-1].bodies)


def run_drop_test(
    assembly: Assembly,
    drop_height: float,
    duration: float = 1.0,
    dt: float = 1.0 / 240.0,
    params: SimParams | None = None,
    substeps_per_frame: int = 4,
) -> DropTestResult:
    """Release the assembly with its lowest point `drop_height` above the
    ground at zero twist and record 60 FPS frames, events and timings.
    Grounded flags are ignored: a drop test is free flight by design."""
    if drop_height < 0:
        raise ValueError("drop height must be nonnegative")
    params = params or SimParams(dt=dt)
    if params.dt != dt:
        params = SimParams(
            dt=dt,
            gravity=params.gravity,
            contact_mu=params.contact_mu,
            restitution=params.restitution,
            restitution_threshold=params.restitution_threshold,
            position_correction=params.position_correction,
            slop=params.slop,
            velocity_iterations=params.velocity_iterations,
            sleep_linear=params.sleep_linear,
            sleep_angular=params.sleep_angular,
            sleep_time=params.sleep_time,
        )
    world = World(assembly, params, ignore_grounded=True)
    lift = drop_height - assembly.min_z()
    for body in world.bodies.values():
        body.position = body.position + np.array([0.0, 0.0, lift])
    world._sync_brick_poses()

    steps = max(1, round(duration / dt))
    frames = []
    breaks = []
    assembly_events = []
    timings = []
    aborted = False
    pending_events: list[dict] = []
    for step in range(steps):
        try:
            record = world.step()
        except NonFiniteState:
            aborted = True
            break
        timings.append((step, record.engine_ms, record.brd_ms))
        for ev in record.break_events:
            breaks.append(ev)
            pending_events.append(
                {
                    "type": "break",
                    "step": ev.step,
                    "connections": list(ev.connection_ids),
                    "worst": ev.worst,
                    "utilization": {str(k): round(v, 6) for k, v in sorted(ev.utilizations.items())},
                }
            )
        for ev in record.assembly_events:
            assembly_events.append(ev)
            pending_events.append(ev)
        if (step + 1) % substeps_per_frame == 0 or step == steps - 1:
            frames.append(_frame(world, step, (step + 1) * dt, pending_events))
            pending_events = []
    return DropTestResult(frames, breaks, assembly_events, timings, aborted)


def _frame(world: World, step: int, t: float, events: list[dict]) -> TrajectoryFrame:
    bodies = []
    for anchor in sorted(world.bodies):
        body = world.bodies[anchor]
        bodies.append(
            {
                "id": int(anchor),
                "bricks": [int(b) for b in body.brick_ids],
                "pos": [float(v) for v in body.position],
                "quat": [float(v) for v in body.quat],
            }
        )
    return TrajectoryFrame(step=step, t=t, bodies=bodies, events=list(events))
