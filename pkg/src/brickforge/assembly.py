"""Assembly container: bricks plus the topology graph, with commit logic
for accepted snap candidates (exact-transform snapping) and grid-level
placement used by the editor, service and loader paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import monitor
from .monitor import EXACT_TOLERANCES, SnapCandidate, SnapTolerances
from .topology import Connection, TopologyGraph, TopologyError
from .transforms import Transform
from .units import MM, UNITS, BrickInstance, BrickType, generate_contact_points


class AssemblyError(Exception):
    pass


class OverlapError(AssemblyError):
    def __init__(self, pairs):
        self.pairs = sorted(tuple(sorted(p)) for p in pairs)
        super().__init__(f"overlapping bricks: {self.pairs}")


class InconsistentCandidates(AssemblyError):
    pass


@dataclass
class Assembly:
    tolerances: SnapTolerances = field(default_factory=SnapTolerances)
    bricks: dict[int, BrickInstance] = field(default_factory=dict)
    graph: TopologyGraph = field(default_factory=TopologyGraph)
    _next_brick_id: int = 0

    @property
    def version(self) -> int:
        return self.graph.version

    def new_brick_id(self) -> int:
        while self._next_brick_id in self.bricks:
            self._next_brick_id += 1
        out = self._next_brick_id
        self._next_brick_id += 1
        return out

    def add_brick(
        self,
        brick_type: BrickType,
        grid_pose: tuple[int, int, int, int] | None = None,
        world_pose: Transform | None = None,
        grounded: bool = False,
        color: str = "gray",
        brick_id: int | None = None,
    ) -> BrickInstance:
        """Register a brick without connecting it."""
        if brick_id is None:
            brick_id = self.new_brick_id()
        if brick_id in self.bricks:
            raise AssemblyError(f"duplicate brick id {brick_id}")
        brick = BrickInstance(brick_id, brick_type, grid_pose=grid_pose, grounded=grounded, color=color)
        if grid_pose is None and world_pose is not None:
            brick.world_pose = world_pose
        self.bricks[brick_id] = brick
        self.graph.add_brick(brick_id)
        return brick

    def remove_brick(self, brick_id: int):
        if brick_id not in self.bricks:
            raise AssemblyError(f"unknown brick {brick_id}")
        report = self.graph.remove_brick(brick_id)
        del self.bricks[brick_id]
        return report

    # -- geometry helpers -------------------------------------------------

    def grid_box(self, brick: BrickInstance) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds (meters, world) of the brick body."""
        lo = brick.world_pose.apply(np.zeros(3))
        hi = brick.world_pose.apply(brick.type.size_m)
        return np.minimum(lo, hi), np.maximum(lo, hi)

    def overlapping_bricks(self, brick: BrickInstance, eps: float = 1e-9) -> list[int]:
        """Bricks whose body boxes strictly intersect this one's; exact
        face contact does not count."""
        lo_a, hi_a = self.grid_box(brick)
        out = []
        for other_id in sorted(self.bricks):
            if other_id == brick.id:
                continue
            lo_b, hi_b = self.grid_box(self.bricks[other_id])
            if np.all(hi_a - lo_b > eps) and np.all(hi_b - lo_a > eps):
                out.append(other_id)
        return out

    def vertical_neighbors(self, brick: BrickInstance, tol_m: float = 1e-6) -> list[BrickInstance]:
        """Bricks whose top/bottom faces touch this brick's faces with
        positive footprint overlap (candidates for engagement)."""
        lo_a, hi_a = self.grid_box(brick)
        out = []
        for other_id in sorted(self.bricks):
            if other_id == brick.id:
                continue
            other = self.bricks[other_id]
            lo_b, hi_b = self.grid_box(other)
            touching = abs(hi_a[2] - lo_b[2]) <= tol_m or abs(hi_b[2] - lo_a[2]) <= tol_m
            if not touching:
                continue
            if hi_a[0] - lo_b[0] > tol_m and hi_b[0] - lo_a[0] > tol_m and hi_a[1] - lo_b[1] > tol_m and hi_b[1] - lo_a[1] > tol_m:
                out.append(other)
        return out

    # -- connection commit -------------------------------------------------

    def commit(self, candidate: SnapCandidate, move: str = "hole") -> Connection:
        """Create the connection for an accepted candidate, snapping the
        moving brick onto the exact discrete transform.

        Re-committing an already-present connection is a no-op returning
        the existing connection.
        """
        if not candidate.accepted:
            raise AssemblyError("cannot commit a rejected candidate")
        stud_brick = self.bricks[candidate.stud_iface.owner]
        hole_brick = self.bricks[candidate.hole_iface.owner]

        existing = self._find_existing(candidate)
        if existing is not None:
            return existing

        edge_t = monitor.exact_edge_transform(
            candidate.stud_iface, candidate.hole_iface, candidate.offset, candidate.psi
        )
        if move == "hole":
            hole_brick.world_pose = stud_brick.world_pose @ edge_t
        elif move == "stud":
            stud_brick.world_pose = hole_brick.world_pose @ edge_t.inverse()
        elif move != "none":
            raise ValueError(f"unknown move {move!r}")

        points = generate_contact_points(list(candidate.engaged), hole_brick.type, (candidate.offset, candidate.psi))
        conn = Connection(
            id=self.graph.next_connection_id(),
            stud_iface=candidate.stud_iface,
            hole_iface=candidate.hole_iface,
            offset=candidate.offset,
            psi=candidate.psi,
            contact_points=tuple(points),
            engaged=candidate.engaged,
        )
        self.graph.add_connection(conn, edge_t)
        return conn

    def _find_existing(self, candidate: SnapCandidate) -> Connection | None:
        for conn in self.graph.edge_between(candidate.stud_iface.owner, candidate.hole_iface.owner):
            if (
                conn.stud_brick == candidate.stud_iface.owner
                and conn.hole_brick == candidate.hole_iface.owner
                and conn.offset == candidate.offset
                and conn.psi == candidate.psi
            ):
                return conn
        return None

    def commit_simultaneous(self, candidates: list[SnapCandidate], move: str = "hole") -> list[Connection]:
        """Commit a batch of accepted candidates. Candidates between the
        same brick pair must imply the same brick-to-brick transform; a
        conflicting group keeps only its smallest planar residual."""
        groups: dict[tuple[int, int], list[SnapCandidate]] = {}
        for c in candidates:
            if not c.accepted:
                continue
            key = (c.stud_iface.owner, c.hole_iface.owner)
            groups.setdefault(key, []).append(c)
        out = []
        for key in sorted(groups):
            group = groups[key]
            transforms = [
                monitor.exact_edge_transform(c.stud_iface, c.hole_iface, c.offset, c.psi) for c in group
            ]
            consistent = all(t.almost_equal(transforms[0]) for t in transforms[1:])
            if not consistent:
                best = min(group, key=lambda c: (c.planar_residual, c.offset, c.psi))
                group = [best]
            for c in group:
                out.append(self.commit(c, move=move))
        return out

    # -- placement (editor / loader path) ----------------------------------

    def place_brick(
        self,
        brick_type: BrickType,
        grid_pose: tuple[int, int, int, int],
        grounded: bool = False,
        color: str = "gray",
        brick_id: int | None = None,
        tolerances: SnapTolerances | None = None,
    ) -> tuple[BrickInstance, list[Connection]]:
        """Add a brick at an exact grid pose and connect it to every
        touching interface (both roles). Raises OverlapError on body
        intersection; the caller decides whether zero connections is
        acceptable (e.g. ground-level placements)."""
        tol = tolerances or EXACT_TOLERANCES
        brick = self.add_brick(brick_type, grid_pose=grid_pose, grounded=grounded, color=color, brick_id=brick_id)
        overlaps = self.overlapping_bricks(brick)
        if overlaps:
            self.remove_brick(brick.id)
            raise OverlapError([(brick_id if brick_id is not None else brick.id, o) for o in overlaps])
        candidates = []
        for other in self.vertical_neighbors(brick):
            candidates.extend(monitor.candidate_pairs(other, brick, tol))
        accepted = [c for c in candidates if c.accepted]
        conns = self.commit_simultaneous(accepted, move="none")
        return brick, conns

    def min_z(self) -> float:
        if not self.bricks:
            return 0.0
        return min(self.grid_box(b)[0][2] for b in self.bricks.values())
