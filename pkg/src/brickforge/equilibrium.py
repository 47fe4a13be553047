"""Force-distribution system assembly for one connected component.

Unknowns are stacked as x = [contact vertex normal forces | per-connection
traction coefficients]. Face contacts transmit unilateral frictionless
normal forces at the overlap polygon vertices. Snap-fit connections carry
six coupled traction coefficients (axial affine field a0 + au*u + av*v and
the rigid planar field (pu0, pv0, spin)), evaluated at the generated
contact points; the planar field is restricted to the rigid
micro-displacement modes, which keeps friction capacity bounded (a free
affine field admits a self-squeeze mode with zero net wrench that would
let any load pass the friction pyramid).

Matrices: A (6 rows per free brick) maps x to net wrenches; G x >= 0
collects vertex nonnegativity and tension-only axial rows; H x <= 1 holds
the friction pyramid rows normalized by mu*F_0; S maps per-connection
relaxations onto their H rows; Q is the elastic-energy surrogate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .topology import Connection
from .transforms import Transform
from .units import MM, UNITS, BrickInstance, stud_centers_connection_frame

GROUND_ID = -1
LAMBDA_REG = 1e-9
CONN_DOF = 6


class EmptyComponent(Exception):
    pass


@dataclass(frozen=True)
class MaterialParams:
    mu: float = 0.2
    preload: float = 3.5  # F_0 in N; mu * F_0 = 0.7 N per contact point
    w_a: float = 1.0
    w_r: float = 1.0
    w_t: float = 1.0

    def __post_init__(self):
        if self.mu <= 0 or self.preload <= 0 or min(self.w_a, self.w_r, self.w_t) <= 0:
            raise ValueError("material parameters must be positive")


@dataclass(frozen=True)
class BrickState:
    """Snapshot of one brick in the solve frame."""

    brick_id: int
    pose: Transform
    mass: float
    size: np.ndarray  # body box, meters
    grounded: bool

    @property
    def com(self) -> np.ndarray:
        return self.pose.apply(self.size / 2.0)

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.pose.apply(np.zeros(3))
        hi = self.pose.apply(self.size)
        return np.minimum(lo, hi), np.maximum(lo, hi)


def brick_state(brick: BrickInstance, pose: Transform | None = None) -> BrickState:
    return BrickState(
        brick_id=brick.id,
        pose=pose if pose is not None else brick.world_pose,
        mass=brick.mass,
        size=brick.type.size_m,
        grounded=brick.grounded,
    )


@dataclass(frozen=True)
class ContactManifold:
    """Compression-only face contact between a lower and an upper body.

    The normal points from the lower body into the upper one (+z in the
    solve frame); lower may be the ground (GROUND_ID).
    """

    lower: int
    upper: int
    normal: np.ndarray
    vertices: np.ndarray  # (V, 3) solve-frame positions, meters


@dataclass
class ConnectionGeometry:
    connection: Connection
    frame: Transform  # connection frame in the solve frame
    points: np.ndarray  # (F, 3) solve-frame contact point positions
    local_positions: np.ndarray  # (F, 3) connection-frame positions, mm
    # Per-point linear maps from the 6 traction coefficients to the force
    # decomposition (axial, radial, tangential), all (F, 6).
    E_a: np.ndarray
    E_r: np.ndarray
    E_t: np.ndarray

    @property
    def stud_brick(self) -> int:
        return self.connection.stud_brick

    @property
    def hole_brick(self) -> int:
        return self.connection.hole_brick

    def point_forces(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-point (F_a, F_r, F_t) for a coefficient block."""
        return self.E_a @ coeffs, self.E_r @ coeffs, self.E_t @ coeffs


@dataclass
class EquilibriumSystem:
    A: sp.csc_matrix
    G: sp.csc_matrix
    H: sp.csc_matrix
    S: sp.csc_matrix
    Q: sp.csc_matrix
    n_x: int
    free_bricks: list[int]  # ordered; 6 A-rows each
    manifolds: list[ContactManifold]
    lambda_slices: list[slice]
    conn_order: list[int]
    conn_slices: dict[int, slice]
    conn_geoms: dict[int, ConnectionGeometry]
    h_row_connection: np.ndarray  # H row -> connection id
    params: MaterialParams

    @property
    def n_connections(self) -> int:
        return len(self.conn_order)

    def connection_coeffs(self, x: np.ndarray, conn_id: int) -> np.ndarray:
        return x[self.conn_slices[conn_id]]


def connection_geometry(conn: Connection, hole_brick_pose: Transform, params: MaterialParams) -> ConnectionGeometry:
    """Connection frame, solve-frame contact points and decomposition maps.

    The frame shares the hole grid axes; its origin is the engaged-stud
    centroid lifted to the stud-tip plane so the stored z_f = -H_S/2 puts
    points at mid-engagement.
    """
    mating = hole_brick_pose @ conn.hole_iface.mating_frame_local()
    centers = stud_centers_connection_frame(list(conn.engaged), (conn.offset, conn.psi))
    cx = sum(c[0] for c in centers) / len(centers)
    cy = sum(c[1] for c in centers) / len(centers)
    frame = mating @ Transform.from_translation(np.array([cx, cy, UNITS.H_S]) * MM)

    n_pts = len(conn.contact_points)
    local = np.array([p.position for p in conn.contact_points], dtype=float)  # mm
    normals = np.array([p.normal for p in conn.contact_points], dtype=float)
    tangents = np.array([p.tangent for p in conn.contact_points], dtype=float)
    points = frame.apply(local * MM)

    u, v = local[:, 0], local[:, 1]
    E_a = np.zeros((n_pts, CONN_DOF))
    E_a[:, 0] = 1.0
    E_a[:, 1] = u
    E_a[:, 2] = v
    E_r = np.zeros((n_pts, CONN_DOF))
    E_r[:, 3] = normals[:, 0]
    E_r[:, 4] = normals[:, 1]
    E_r[:, 5] = u * normals[:, 1] - v * normals[:, 0]
    E_t = np.zeros((n_pts, CONN_DOF))
    E_t[:, 3] = tangents[:, 0]
    E_t[:, 4] = tangents[:, 1]
    E_t[:, 5] = u * tangents[:, 1] - v * tangents[:, 0]
    return ConnectionGeometry(conn, frame, points, local, E_a, E_r, E_t)


def internal_contacts(states: dict[int, BrickState], with_ground: bool, tol: float = 1e-9) -> list[ContactManifold]:
    """Face-contact manifolds between vertically adjacent bricks of one
    component, plus ground contacts for bricks resting at z = 0.

    Committed bricks are axis-aligned in any frame derived from the
    topology, so overlaps are axis-aligned rectangle intersections;
    degenerate (zero-area) overlaps are dropped.
    """
    out: list[ContactManifold] = []
    ids = sorted(states)
    boxes = {i: states[i].box() for i in ids}
    up = np.array([0.0, 0.0, 1.0])
    for idx, i in enumerate(ids):
        lo_i, hi_i = boxes[i]
        if with_ground and abs(lo_i[2]) <= tol and not states[i].grounded:
            rect = _rect_vertices(lo_i[0], lo_i[1], hi_i[0], hi_i[1], 0.0)
            out.append(ContactManifold(GROUND_ID, i, up.copy(), rect))
        for j in ids[idx + 1:]:
            lo_j, hi_j = boxes[j]
            if states[i].grounded and states[j].grounded:
                continue  # both static: the manifold would carry no rows
            for lower, upper, z in ((i, j, hi_i[2]), (j, i, hi_j[2])):
                lo_l, hi_l = boxes[lower]
                lo_u, hi_u = boxes[upper]
                if abs(hi_l[2] - lo_u[2]) > tol:
                    continue
                x0, x1 = max(lo_l[0], lo_u[0]), min(hi_l[0], hi_u[0])
                y0, y1 = max(lo_l[1], lo_u[1]), min(hi_l[1], hi_u[1])
                if x1 - x0 > tol and y1 - y0 > tol:
                    out.append(ContactManifold(lower, upper, up.copy(), _rect_vertices(x0, y0, x1, y1, z)))
    return out


def _rect_vertices(x0, y0, x1, y1, z) -> np.ndarray:
    return np.array([[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]])


def _coo(rows, cols, data, shape) -> sp.csc_matrix:
    if not rows:
        return sp.csc_matrix(shape)
    return sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def contact_wrench_columns(manifold: ContactManifold, brick_id: int, com: np.ndarray) -> np.ndarray:
    """(6, V) columns of A for one brick incident to a face contact.

    The lower body sees -n per unit vertex force, the upper +n; torques
    are about the brick COM (N m)."""
    sign = -1.0 if brick_id == manifold.lower else 1.0
    n = manifold.normal * sign
    arms = manifold.vertices - com
    cols = np.empty((6, len(manifold.vertices)))
    cols[:3] = n[:, None]
    cols[3:] = np.cross(arms, n).T
    return cols


def connection_wrench_columns(geom: ConnectionGeometry, brick_id: int, com: np.ndarray) -> np.ndarray:
    """(6, 6) columns of A for one brick incident to a connection.

    Forces on the stud-side (lower) brick are n*F_a + u*p_u + v*p_v summed
    over contact points; the hole-side brick takes the reaction."""
    sign = 1.0 if brick_id == geom.stud_brick else -1.0
    R = geom.frame.R
    u_hat, v_hat, n_hat = R[:, 0], R[:, 1], R[:, 2]
    local = geom.local_positions
    uu, vv = local[:, 0], local[:, 1]
    npts = len(geom.points)
    # per-point force gradients wrt the 6 coefficients, (F, 3, 6)
    dF = np.zeros((npts, 3, CONN_DOF))
    dF[:, :, 0] = n_hat
    dF[:, :, 1] = np.outer(uu, n_hat)
    dF[:, :, 2] = np.outer(vv, n_hat)
    dF[:, :, 3] = u_hat
    dF[:, :, 4] = v_hat
    dF[:, :, 5] = np.outer(-vv, u_hat) + np.outer(uu, v_hat)
    dF *= sign
    arms = geom.points - com
    torque = np.cross(arms[:, None, :], dF.transpose(0, 2, 1)).transpose(0, 2, 1)
    cols = np.empty((6, CONN_DOF))
    cols[:3] = dF.sum(axis=0)
    cols[3:] = torque.sum(axis=0)
    return cols


def build_system(
    states: dict[int, BrickState],
    connections: list[Connection],
    params: MaterialParams | None = None,
    with_ground: bool = True,
) -> EquilibriumSystem:
    """Assemble the sparse force-distribution system for one component."""
    if not states:
        raise EmptyComponent("component has no bricks")
    params = params or MaterialParams()

    manifolds = internal_contacts(states, with_ground=with_ground)
    conns = sorted(connections, key=lambda c: c.id)
    geoms = {}
    for c in conns:
        geoms[c.id] = connection_geometry(c, states[c.hole_brick].pose, params)

    lambda_slices = []
    cursor = 0
    for m in manifolds:
        lambda_slices.append(slice(cursor, cursor + len(m.vertices)))
        cursor += len(m.vertices)
    conn_slices = {}
    for c in conns:
        conn_slices[c.id] = slice(cursor, cursor + CONN_DOF)
        cursor += CONN_DOF
    n_x = cursor

    free_bricks = sorted(i for i, s in states.items() if not s.grounded)
    brick_row = {b: 6 * k for k, b in enumerate(free_bricks)}
    coms = {i: states[i].com for i in states}

    def _block(rows_out, cols_out, data_out, block, row0, col0):
        r, c = np.nonzero(block)
        rows_out.append(r + row0)
        cols_out.append(c + col0)
        data_out.append(block[r, c])

    a_r, a_c, a_d = [], [], []
    for m, sl in zip(manifolds, lambda_slices):
        for b in (m.lower, m.upper):
            if b in brick_row:
                _block(a_r, a_c, a_d, contact_wrench_columns(m, b, coms[b]), brick_row[b], sl.start)
    for c in conns:
        geom = geoms[c.id]
        for b in (c.stud_brick, c.hole_brick):
            if b in brick_row:
                _block(a_r, a_c, a_d, connection_wrench_columns(geom, b, coms[b]), brick_row[b], conn_slices[c.id].start)
    A = _coo(a_r, a_c, a_d, (6 * len(free_bricks), n_x))

    # G: lambda >= 0 rows, then tension-only axial rows per contact point.
    n_pts_total = sum(len(geoms[c.id].points) for c in conns)
    n_lambda = sum(len(m.vertices) for m in manifolds)
    g_r, g_c, g_d = [], [], []
    if n_lambda:
        lam = np.arange(n_lambda)
        g_r.append(lam)
        g_c.append(lam)
        g_d.append(np.ones(n_lambda))
    row = n_lambda
    for c in conns:
        geom = geoms[c.id]
        _block(g_r, g_c, g_d, geom.E_a, row, conn_slices[c.id].start)
        row += len(geom.points)
    G = _coo(g_r, g_c, g_d, (n_lambda + n_pts_total, n_x))

    # H: friction pyramid rows, two signs per point, normalized by mu*F_0.
    scale = 1.0 / (params.mu * params.preload)
    h_r, h_c, h_d = [], [], []
    h_conn = np.zeros(2 * n_pts_total, dtype=int)
    row = 0
    conn_index = {c.id: k for k, c in enumerate(conns)}
    s_rows, s_cols = [], []
    for c in conns:
        geom = geoms[c.id]
        base = geom.E_a - params.mu * geom.E_r
        for sign in (1.0, -1.0):
            block = (base + sign * geom.E_t) * scale
            _block(h_r, h_c, h_d, block, row, conn_slices[c.id].start)
            h_conn[row: row + len(geom.points)] = c.id
            s_rows.append(np.arange(row, row + len(geom.points)))
            s_cols.append(np.full(len(geom.points), conn_index[c.id]))
            row += len(geom.points)
    H = _coo(h_r, h_c, h_d, (2 * n_pts_total, n_x))
    if s_rows:
        s_rows = np.concatenate(s_rows)
        s_cols = np.concatenate(s_cols)
    S = sp.csc_matrix(
        (np.ones(len(s_rows)), (s_rows, s_cols)), shape=(2 * n_pts_total, len(conns))
    )

    # Q: elastic-energy surrogate, block diagonal over connections, with a
    # small regularizer on the lambda block for strict convexity.
    q_r, q_c, q_d = [], [], []
    if n_lambda:
        lam = np.arange(n_lambda)
        q_r.append(lam)
        q_c.append(lam)
        q_d.append(np.full(n_lambda, LAMBDA_REG))
    for c in conns:
        geom = geoms[c.id]
        block = (
            params.w_a * geom.E_a.T @ geom.E_a
            + params.w_r * geom.E_r.T @ geom.E_r
            + params.w_t * geom.E_t.T @ geom.E_t
        )
        block = (block + block.T) / 2.0
        _block(q_r, q_c, q_d, block, conn_slices[c.id].start, conn_slices[c.id].start)
    Q = _coo(q_r, q_c, q_d, (n_x, n_x))

    return EquilibriumSystem(
        A=A,
        G=G,
        H=H,
        S=S,
        Q=Q,
        n_x=n_x,
        free_bricks=free_bricks,
        manifolds=manifolds,
        lambda_slices=lambda_slices,
        conn_order=[c.id for c in conns],
        conn_slices=conn_slices,
        conn_geoms=geoms,
        h_row_connection=h_conn,
        params=params,
    )


def energy(system: EquilibriumSystem, x: np.ndarray) -> float:
    return 0.5 * float(x @ (system.Q @ x))


def pointwise_energy(system: EquilibriumSystem, x: np.ndarray) -> float:
    """Energy recomputed point by point; cross-check for Q."""
    p = system.params
    total = 0.0
    for cid in system.conn_order:
        geom = system.conn_geoms[cid]
        fa, fr, ft = geom.point_forces(x[system.conn_slices[cid]])
        total += 0.5 * float(p.w_a * fa @ fa + p.w_r * fr @ fr + p.w_t * ft @ ft)
    lam = x[: sum(len(m.vertices) for m in system.manifolds)]
    return total + 0.5 * LAMBDA_REG * float(lam @ lam)


def dump_system(system: EquilibriumSystem, b: np.ndarray, fp) -> None:
    """Debug dump in a sparse triplet text format: per matrix a header
    `# name rows cols nnz` then `row col value` lines."""
    for name in ("A", "G", "H", "S", "Q"):
        mat = getattr(system, name).tocoo()
        fp.write(f"# {name} {mat.shape[0]} {mat.shape[1]} {mat.nnz}\n")
        order = np.lexsort((mat.col, mat.row))
        for k in order:
            fp.write(f"{mat.row[k]} {mat.col[k]} {mat.data[k]!r}\n")
    fp.write(f"# b {len(b)}\n")
    for val in b:
        fp.write(f"{val!r}\n")
