"""Brick topology graph: bricks as nodes, snap-fit edges with rigid
relative transforms, connected-component maintenance and the minimal
disconnecting breakage-set computation.

One edge per brick pair carries a list of connections; every connection
on an edge must induce the same brick-to-brick transform. Relative poses
are stored per node against a per-component anchor (lowest brick id), so
path consistency reduces to comparing two stored transforms.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .transforms import Transform
from .units import ContactPointSpec, Interface

LIN_TOL = 1e-9  # meters
ANG_TOL = 1e-9  # radians


class TopologyError(Exception):
    pass


class ConsistencyViolation(TopologyError):
    """A new connection implies a relative pose conflicting with an
    existing path between the same bricks."""


class UnknownConnection(TopologyError):
    pass


class UnknownBrick(TopologyError):
    pass


@dataclass(frozen=True)
class Connection:
    """One stud-to-hole engagement with its discrete parameters."""

    id: int
    stud_iface: Interface
    hole_iface: Interface
    offset: tuple[int, int]
    psi: int
    contact_points: tuple[ContactPointSpec, ...]
    engaged: tuple[tuple[int, int], ...]

    @property
    def stud_brick(self) -> int:
        return self.stud_iface.owner

    @property
    def hole_brick(self) -> int:
        return self.hole_iface.owner

    @property
    def bricks(self) -> tuple[int, int]:
        return (self.stud_brick, self.hole_brick)


@dataclass
class _Edge:
    u: int
    v: int
    transform: Transform  # pose of v in u's frame
    connections: list[Connection] = field(default_factory=list)


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class MergeReport:
    merged: bool
    component: frozenset[int]


@dataclass
class SplitReport:
    removed: list[int]
    components: list[frozenset[int]]


class TopologyGraph:
    def __init__(self):
        self._nodes: set[int] = set()
        self._edges: dict[tuple[int, int], _Edge] = {}
        self._conn_index: dict[int, tuple[int, int]] = {}  # conn id -> edge key
        self._anchor: dict[int, int] = {}  # node -> component anchor
        self._rel: dict[int, Transform] = {}  # node pose in anchor frame
        self._next_conn_id = 0
        self.version = 0

    # -- basic accessors -------------------------------------------------

    @property
    def nodes(self) -> set[int]:
        return set(self._nodes)

    def connections(self) -> list[Connection]:
        out = []
        for key in sorted(self._edges):
            out.extend(self._edges[key].connections)
        return sorted(out, key=lambda c: c.id)

    def connection(self, conn_id: int) -> Connection:
        key = self._conn_index.get(conn_id)
        if key is None:
            raise UnknownConnection(f"connection {conn_id}")
        for c in self._edges[key].connections:
            if c.id == conn_id:
                return c
        raise UnknownConnection(f"connection {conn_id}")

    def edge_between(self, u: int, v: int) -> list[Connection]:
        e = self._edges.get(_pair(u, v))
        return list(e.connections) if e else []

    def components(self) -> list[frozenset[int]]:
        groups: dict[int, set[int]] = {}
        for n in self._nodes:
            groups.setdefault(self._anchor[n], set()).add(n)
        return [frozenset(groups[a]) for a in sorted(groups)]

    def component_of(self, node: int) -> frozenset[int]:
        if node not in self._nodes:
            raise UnknownBrick(f"brick {node}")
        a = self._anchor[node]
        return frozenset(n for n in self._nodes if self._anchor[n] == a)

    def neighbors(self, node: int) -> list[int]:
        out = []
        for (a, b) in self._edges:
            if a == node:
                out.append(b)
            elif b == node:
                out.append(a)
        return sorted(out)

    def degree_connections(self, node: int) -> int:
        return sum(len(e.connections) for k, e in self._edges.items() if node in k)

    def next_connection_id(self) -> int:
        cid = self._next_conn_id
        self._next_conn_id += 1
        return cid

    # -- mutation --------------------------------------------------------

    def add_brick(self, brick_id: int) -> None:
        if brick_id in self._nodes:
            return
        self._nodes.add(brick_id)
        self._anchor[brick_id] = brick_id
        self._rel[brick_id] = Transform.identity()
        self.version += 1

    def remove_brick(self, brick_id: int) -> SplitReport:
        """Remove a brick and all incident connections."""
        if brick_id not in self._nodes:
            raise UnknownBrick(f"brick {brick_id}")
        incident = [c.id for k, e in self._edges.items() if brick_id in k for c in e.connections]
        report = self.remove_connections(incident) if incident else SplitReport([], [])
        self._nodes.discard(brick_id)
        self._anchor.pop(brick_id, None)
        self._rel.pop(brick_id, None)
        self.version += 1
        report.components = [c for c in self.components()]
        return report

    def add_connection(self, conn: Connection, edge_transform: Transform) -> MergeReport:
        """Insert a connection; merge components or verify path consistency.

        edge_transform is the pose of the hole brick in the stud brick's
        frame. Raises ConsistencyViolation (graph unchanged) on conflict.
        """
        u, v = conn.stud_brick, conn.hole_brick
        if u not in self._nodes or v not in self._nodes:
            raise UnknownBrick(f"brick pair ({u}, {v})")
        if u == v:
            raise TopologyError("self connection")

        key = _pair(u, v)
        # Transform stored on the edge is key[0] -> key[1].
        T_uv = edge_transform if key == (u, v) else edge_transform.inverse()

        same_component = self._anchor[u] == self._anchor[v]
        if same_component:
            implied = self._rel[key[0]].inverse() @ self._rel[key[1]]
            if not implied.almost_equal(T_uv, LIN_TOL, ANG_TOL):
                raise ConsistencyViolation(
                    f"connection {conn.id} implies a pose conflicting with the existing path "
                    f"between bricks {u} and {v}"
                )

        edge = self._edges.get(key)
        if edge is None:
            edge = _Edge(key[0], key[1], T_uv)
            self._edges[key] = edge
        else:
            if not edge.transform.almost_equal(T_uv, LIN_TOL, ANG_TOL):
                raise ConsistencyViolation(
                    f"connection {conn.id} conflicts with the existing edge transform "
                    f"between bricks {u} and {v}"
                )
        edge.connections.append(conn)
        self._conn_index[conn.id] = key
        self._next_conn_id = max(self._next_conn_id, conn.id + 1)

        if not same_component:
            # Re-express the absorbed component in the surviving frame.
            a_u, a_v = self._anchor[key[0]], self._anchor[key[1]]
            base = self._rel[key[0]] @ T_uv @ self._rel[key[1]].inverse()
            moved = [n for n in self._nodes if self._anchor[n] == a_v]
            for n in moved:
                self._rel[n] = base @ self._rel[n]
                self._anchor[n] = a_u
            self._rebase_component(a_u)
        self.version += 1
        return MergeReport(not same_component, self.component_of(u))

    def remove_connections(self, conn_ids) -> SplitReport:
        conn_ids = list(conn_ids)
        for cid in conn_ids:
            if cid not in self._conn_index:
                raise UnknownConnection(f"connection {cid}")
        touched: set[int] = set()
        for cid in conn_ids:
            key = self._conn_index.pop(cid)
            edge = self._edges[key]
            edge.connections = [c for c in edge.connections if c.id != cid]
            touched.update(key)
            if not edge.connections:
                del self._edges[key]
        affected_anchors = {self._anchor[n] for n in touched if n in self._nodes}
        affected_nodes = {n for n in self._nodes if self._anchor[n] in affected_anchors}
        parts = self._recompute_components(affected_nodes)
        self.version += 1
        return SplitReport(conn_ids, parts)

    # -- queries ---------------------------------------------------------

    def relative_pose(self, u: int, v: int) -> Transform | None:
        """Pose of v in u's frame, or None if in different components."""
        if u not in self._nodes or v not in self._nodes:
            raise UnknownBrick(f"brick pair ({u}, {v})")
        if self._anchor[u] != self._anchor[v]:
            return None
        return self._rel[u].inverse() @ self._rel[v]

    def anchor_of(self, node: int) -> int:
        return self._anchor[node]

    def pose_in_component(self, node: int) -> Transform:
        """Pose of a brick in its component's anchor frame."""
        return self._rel[node]

    def minimal_breakage_set(self, overloaded: set[int], worst: int) -> set[int]:
        """Smallest subset of overloaded connections, containing `worst`,
        whose removal disconnects the endpoints of `worst`.

        Computed as a minimum cut between the endpoint bricks, overloaded
        connections carrying unit capacity and everything else infinite.
        Ties resolve to the lexicographically smallest sorted id tuple via
        exact power-of-two capacity perturbations. Falls back to {worst}
        when no finite cut exists.
        """
        if worst not in overloaded:
            raise UnknownConnection(f"worst connection {worst} not in overloaded set")
        for cid in overloaded:
            if cid not in self._conn_index:
                raise UnknownConnection(f"connection {cid}")
        worst_conn = self.connection(worst)
        src, dst = _pair(*worst_conn.bricks)

        ids = sorted(overloaded)
        n_ov = len(ids)
        rank = {cid: r for r, cid in enumerate(ids)}
        base = 1 << (n_ov + 1)
        inf_cap = (n_ov + 2) * base

        def conn_capacity(cid: int) -> int:
            if cid in overloaded:
                # base - 2^(n-1-rank): among equal-size cuts, maximizing the
                # recovered bits picks the lexicographically smallest id set.
                return base - (1 << (n_ov - 1 - rank[cid]))
            return inf_cap

        capacity: dict[tuple[int, int], int] = {}
        for key in sorted(self._edges):
            e = self._edges[key]
            cap = sum(conn_capacity(c.id) for c in e.connections)
            capacity[(e.u, e.v)] = capacity.get((e.u, e.v), 0) + cap
            capacity[(e.v, e.u)] = capacity.get((e.v, e.u), 0) + cap

        flow_value, reachable = _max_flow(capacity, src, dst)
        if flow_value >= inf_cap:
            return {worst}

        cut = set()
        for key in sorted(self._edges):
            e = self._edges[key]
            if (e.u in reachable) != (e.v in reachable):
                cut.update(c.id for c in e.connections)
        return cut

    # -- internals -------------------------------------------------------

    def _rebase_component(self, old_anchor: int) -> None:
        members = sorted(n for n in self._nodes if self._anchor[n] == old_anchor)
        new_anchor = members[0]
        if new_anchor == old_anchor:
            return
        base = self._rel[new_anchor].inverse()
        for n in members:
            self._rel[n] = base @ self._rel[n]
            self._anchor[n] = new_anchor

    def _recompute_components(self, nodes: set[int]) -> list[frozenset[int]]:
        adj: dict[int, list[tuple[int, Transform]]] = {n: [] for n in nodes}
        for key in sorted(self._edges):
            e = self._edges[key]
            if e.u in nodes:
                adj[e.u].append((e.v, e.transform))
                adj[e.v].append((e.u, e.transform.inverse()))
        remaining = set(nodes)
        parts = []
        while remaining:
            anchor = min(remaining)
            seen = {anchor}
            self._rel[anchor] = Transform.identity()
            self._anchor[anchor] = anchor
            queue = deque([anchor])
            while queue:
                cur = queue.popleft()
                for (nxt, T) in sorted(adj[cur], key=lambda p: p[0]):
                    if nxt in seen:
                        continue
                    seen.add(nxt)
                    self._rel[nxt] = self._rel[cur] @ T
                    self._anchor[nxt] = anchor
                    queue.append(nxt)
            remaining -= seen
            parts.append(frozenset(seen))
        return parts

    def check_invariants(self) -> None:
        """Full structural self-check; raises on violation (tests/fuzz)."""
        for key, e in self._edges.items():
            assert key == _pair(e.u, e.v) and e.connections, "edge bookkeeping"
            for c in e.connections:
                assert _pair(*c.bricks) == key, "connection on wrong edge"
        # maintained partition equals from-scratch connectivity
        fresh = _components_from_edges(self._nodes, self._edges)
        assert sorted(map(sorted, fresh)) == sorted(map(sorted, (set(c) for c in self.components())))
        # anchors are component minima and rel poses reproduce edge transforms
        for part in self.components():
            a = min(part)
            for n in part:
                assert self._anchor[n] == a, "anchor must be the lowest id"
            assert self._rel[a].almost_equal(Transform.identity(), LIN_TOL, ANG_TOL)
        for e in self._edges.values():
            implied = self._rel[e.u].inverse() @ self._rel[e.v]
            assert implied.almost_equal(e.transform, 1e-8, 1e-8), "cycle consistency"


def _components_from_edges(nodes: set[int], edges: dict) -> list[set[int]]:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b) in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, set[int]] = {}
    for n in nodes:
        groups.setdefault(find(n), set()).add(n)
    return list(groups.values())


def _max_flow(capacity: dict[tuple[int, int], int], src: int, dst: int) -> tuple[int, set[int]]:
    """Edmonds-Karp with exact integer capacities.

    Returns (flow value, residual-reachable set from src).
    """
    residual = dict(capacity)
    adj: dict[int, list[int]] = {}
    for (a, b) in capacity:
        adj.setdefault(a, []).append(b)
    for a in adj:
        adj[a].sort()

    flow = 0
    while True:
        parent = {src: None}
        queue = deque([src])
        while queue and dst not in parent:
            cur = queue.popleft()
            for nxt in adj.get(cur, ()):
                if nxt not in parent and residual.get((cur, nxt), 0) > 0:
                    parent[nxt] = cur
                    queue.append(nxt)
        if dst not in parent:
            return flow, set(parent)
        bottleneck = None
        node = dst
        while parent[node] is not None:
            prev = parent[node]
            cap = residual[(prev, node)]
            bottleneck = cap if bottleneck is None else min(bottleneck, cap)
            node = prev
        node = dst
        while parent[node] is not None:
            prev = parent[node]
            residual[(prev, node)] -= bottleneck
            residual[(node, prev)] = residual.get((node, prev), 0) + bottleneck
            if (node, prev) not in capacity:
                adj.setdefault(node, []).append(prev)
                adj[node].sort()
            node = prev
        flow += bottleneck
