"""Narrowphase collision: OBB vs OBB via the separating axis test with
reference-face clipping, and OBB vs ground plane. Manifolds are capped at
four points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Obb:
    center: np.ndarray  # world
    R: np.ndarray  # columns are the box axes in world frame
    half: np.ndarray

    def corners(self) -> np.ndarray:
        signs = np.array(
            [
                [sx, sy, sz]
                for sx in (-1, 1)
                for sy in (-1, 1)
                for sz in (-1, 1)
            ],
            dtype=float,
        )
        return self.center + (signs * self.half) @ self.R.T


@dataclass
class ContactPoint:
    position: np.ndarray
    normal: np.ndarray  # from box A toward box B
    depth: float


def ground_contacts(box: Obb) -> list[ContactPoint]:
    """Corners below z = 0; normal +z (ground is 'A', the box is 'B')."""
    pts = []
    for corner in box.corners():
        if corner[2] < 0.0:
            pts.append(ContactPoint(corner.copy(), np.array([0.0, 0.0, 1.0]), -corner[2]))
    pts.sort(key=lambda p: (-p.depth, p.position[0], p.position[1]))
    return _reduce_manifold(pts)


def box_box_contacts(a: Obb, b: Obb) -> list[ContactPoint]:
    """SAT over the 15 candidate axes; face-face pairs are clipped, the
    edge-edge case yields the closest-point contact. Normals point from
    a into b. Empty list when separated."""
    t = b.center - a.center
    best_overlap = np.inf
    best_axis = None
    best_kind = None  # ("face", owner) | ("edge", i, j)

    axes_a = [a.R[:, i] for i in range(3)]
    axes_b = [b.R[:, i] for i in range(3)]

    def radius(box, axis):
        return float(np.sum(box.half * np.abs(box.R.T @ axis)))

    def test(axis, kind):
        nonlocal best_overlap, best_axis, best_kind
        norm = np.linalg.norm(axis)
        if norm < 1e-9:
            return True
        axis = axis / norm
        overlap = radius(a, axis) + radius(b, axis) - abs(float(t @ axis))
        if overlap < 0:
            return False
        # prefer face axes on near-ties: clipping gives stabler manifolds
        bias = 1.0 if kind[0] == "face" else 0.95
        if overlap * bias < best_overlap:
            best_overlap = overlap * bias
            best_axis = axis if axis @ t >= 0 else -axis
            best_kind = kind
        return True

    for i, ax in enumerate(axes_a):
        if not test(ax, ("face", "a", i)):
            return []
    for i, ax in enumerate(axes_b):
        if not test(ax, ("face", "b", i)):
            return []
    for i in range(3):
        for j in range(3):
            if not test(np.cross(axes_a[i], axes_b[j]), ("edge", i, j)):
                return []

    if best_kind[0] == "face":
        ref, inc = (a, b) if best_kind[1] == "a" else (b, a)
        normal = best_axis if best_kind[1] == "a" else -best_axis  # out of ref
        pts = _clip_face_contact(ref, inc, normal)
        if best_kind[1] == "b":
            # normal convention: from a into b
            for p in pts:
                p.normal = -p.normal
        return _reduce_manifold(pts)
    return _edge_contact(a, b, best_axis, best_kind[1], best_kind[2])


def _face_vertices(box: Obb, normal: np.ndarray) -> np.ndarray:
    """Vertices of the box face whose outward normal best matches
    `normal`, counter-clockwise about it."""
    local_n = box.R.T @ normal
    axis = int(np.argmax(np.abs(local_n)))
    sign = 1.0 if local_n[axis] >= 0 else -1.0
    u, v = (axis + 1) % 3, (axis + 2) % 3
    pts = []
    for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        corner = np.zeros(3)
        corner[axis] = sign * box.half[axis]
        corner[u] = su * box.half[u]
        corner[v] = sv * box.half[v]
        pts.append(box.center + box.R @ corner)
    return np.array(pts)


def _clip_face_contact(ref: Obb, inc: Obb, normal: np.ndarray) -> list[ContactPoint]:
    """Clip the incident face against the reference face's side planes,
    keeping points behind the reference plane."""
    inc_face = _face_vertices(inc, -normal)
    ref_face = _face_vertices(ref, normal)
    poly = [p for p in inc_face]
    center = ref_face.mean(axis=0)
    for k in range(4):
        edge = ref_face[(k + 1) % 4] - ref_face[k]
        plane_n = np.cross(edge, normal)
        # orient inward
        if (center - ref_face[k]) @ plane_n < 0:
            plane_n = -plane_n
        poly = _clip_polygon(poly, ref_face[k], plane_n)
        if not poly:
            return []
    out = []
    for p in poly:
        depth = float((ref_face[0] - p) @ normal)
        if depth >= -1e-9:
            out.append(ContactPoint(np.asarray(p), normal.copy(), max(depth, 0.0)))
    return out


def _clip_polygon(poly, plane_point, plane_n):
    out = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        d_cur = (cur - plane_point) @ plane_n
        d_nxt = (nxt - plane_point) @ plane_n
        if d_cur >= 0:
            out.append(cur)
        if (d_cur >= 0) != (d_nxt >= 0) and abs(d_nxt - d_cur) > 1e-15:
            frac = d_cur / (d_cur - d_nxt)
            out.append(cur + frac * (nxt - cur))
    return out


def _edge_contact(a: Obb, b: Obb, axis: np.ndarray, i: int, j: int) -> list[ContactPoint]:
    """Closest points of the supporting edges along the separating axis."""
    # supporting edge of A in direction +axis
    def support_edge(box, direction, edge_axis):
        local_d = box.R.T @ direction
        corner = np.where(local_d >= 0, box.half, -box.half)
        corner[edge_axis] = 0.0
        mid = box.center + box.R @ corner
        d = box.R[:, edge_axis] * box.half[edge_axis]
        return mid - d, mid + d

    p1, p2 = support_edge(a, axis, i)
    q1, q2 = support_edge(b, -axis, j)
    pa, pb = _closest_points_segments(p1, p2, q1, q2)
    depth = float((pb - pa) @ axis)
    # depth along the axis: boxes overlap when B's point is behind A's
    overlap = -depth
    if overlap < -1e-9:
        return []
    mid = (pa + pb) / 2
    return [ContactPoint(mid, axis.copy(), max(overlap, 0.0))]


def _closest_points_segments(p1, p2, q1, q2):
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    c = d1 @ r
    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if abs(denom) > 1e-15 else 0.0
    t = (b * s + f) / e if e > 1e-15 else 0.0
    t = np.clip(t, 0.0, 1.0)
    s = np.clip((b * t - c) / a, 0.0, 1.0) if a > 1e-15 else 0.0
    return p1 + s * d1, q1 + t * d2


def _reduce_manifold(points: list[ContactPoint], cap: int = 4) -> list[ContactPoint]:
    if len(points) <= cap:
        return points
    pts = sorted(points, key=lambda p: -p.depth)
    chosen = [pts[0]]
    rest = pts[1:]
    # farthest from the first
    rest.sort(key=lambda p: -np.linalg.norm(p.position - chosen[0].position))
    chosen.append(rest.pop(0))
    # maximize triangle area
    def tri_area(p):
        return np.linalg.norm(
            np.cross(chosen[1].position - chosen[0].position, p.position - chosen[0].position)
        )

    rest.sort(key=lambda p: -tri_area(p))
    chosen.append(rest.pop(0))
    rest.sort(key=lambda p: -tri_area(p))
    chosen.append(rest.pop(0))
    return chosen
