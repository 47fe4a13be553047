import itertools

import numpy as np
import pytest

from brickforge.assembly import Assembly
from brickforge.monitor import exact_edge_transform
from brickforge.topology import (
    Connection,
    ConsistencyViolation,
    TopologyGraph,
    UnknownConnection,
)
from brickforge.transforms import Transform
from brickforge.units import BrickInstance, brick_type, generate_contact_points


def make_connection(graph, lower: BrickInstance, upper: BrickInstance, offset=(0, 0), psi=0):
    stud = lower.stud_interface()
    hole = upper.hole_interface()
    from brickforge.units import engaged_studs

    engaged = tuple(engaged_studs((offset, psi), stud, hole))
    pts = tuple(generate_contact_points(list(engaged), upper.type, (offset, psi)))
    conn = Connection(graph.next_connection_id(), stud, hole, offset, psi, pts, engaged)
    return conn, exact_edge_transform(stud, hole, offset, psi)


def simple_bricks(n, bt=None):
    bt = bt or brick_type(2, 2)
    return [BrickInstance(i, bt, grid_pose=(0, 0, 3 * i, 0)) for i in range(n)]


class TestGraphBasics:
    def test_merge_two_singletons(self):
        g = TopologyGraph()
        bricks = simple_bricks(2)
        for b in bricks:
            g.add_brick(b.id)
        conn, T = make_connection(g, bricks[0], bricks[1])
        report = g.add_connection(conn, T)
        assert report.merged
        assert g.components() == [frozenset({0, 1})]

    def test_parallel_connection_same_edge(self):
        g = TopologyGraph()
        lower = BrickInstance(0, brick_type(2, 4), grid_pose=(0, 0, 0, 0))
        upper = BrickInstance(1, brick_type(2, 4), grid_pose=(0, 0, 3, 0))
        g.add_brick(0)
        g.add_brick(1)
        c1, t1 = make_connection(g, lower, upper, (0, 0), 0)
        g.add_connection(c1, t1)
        c2, t2 = make_connection(g, lower, upper, (0, 0), 0)
        report = g.add_connection(c2, t2)
        assert not report.merged
        assert len(g.edge_between(0, 1)) == 2
        assert g.components() == [frozenset({0, 1})]

    def test_conflicting_transform_rejected(self):
        g = TopologyGraph()
        bricks = simple_bricks(2)
        for b in bricks:
            g.add_brick(b.id)
        c1, t1 = make_connection(g, bricks[0], bricks[1], (0, 0), 0)
        g.add_connection(c1, t1)
        c2, t2 = make_connection(g, bricks[0], bricks[1], (0, 0), 0)
        shifted = Transform(t2.R, t2.t + np.array([0.001, 0, 0]))  # off by 1 mm
        with pytest.raises(ConsistencyViolation):
            g.add_connection(c2, shifted)
        assert len(g.edge_between(0, 1)) == 1
        g.check_invariants()

    def test_relative_pose(self):
        g = TopologyGraph()
        bricks = simple_bricks(3)
        for b in bricks:
            g.add_brick(b.id)
        for lo, hi in ((0, 1), (1, 2)):
            c, t = make_connection(g, bricks[lo], bricks[hi])
            g.add_connection(c, t)
        assert g.relative_pose(0, 0).almost_equal(Transform.identity())
        t02 = g.relative_pose(0, 2)
        assert np.allclose(t02.t, [0, 0, 2 * 0.0096], atol=1e-12)
        g2 = TopologyGraph()
        g2.add_brick(7)
        g.add_brick(99)
        assert g.relative_pose(0, 99) is None


class TestRemoval:
    def build_chain(self, n=3):
        g = TopologyGraph()
        bricks = simple_bricks(n)
        conns = []
        for b in bricks:
            g.add_brick(b.id)
        for lo in range(n - 1):
            c, t = make_connection(g, bricks[lo], bricks[lo + 1])
            g.add_connection(c, t)
            conns.append(c)
        return g, bricks, conns

    def test_chain_split(self):
        g, _, conns = self.build_chain(3)
        report = g.remove_connections([conns[0].id])
        assert sorted(map(sorted, report.components)) == [[0], [1, 2]]
        g.check_invariants()

    def test_parallel_survives(self):
        g = TopologyGraph()
        lower = BrickInstance(0, brick_type(2, 4), grid_pose=(0, 0, 0, 0))
        upper = BrickInstance(1, brick_type(2, 4), grid_pose=(0, 0, 3, 0))
        g.add_brick(0)
        g.add_brick(1)
        c1, t1 = make_connection(g, lower, upper)
        c2, t2 = make_connection(g, lower, upper)
        g.add_connection(c1, t1)
        g.add_connection(c2, t2)
        g.remove_connections([c1.id])
        assert g.components() == [frozenset({0, 1})]
        assert len(g.edge_between(0, 1)) == 1

    def test_unknown_connection(self):
        g, _, _ = self.build_chain(2)
        with pytest.raises(UnknownConnection):
            g.remove_connections([999])

    def test_loop_degrades_to_path(self):
        g, frame = four_cycle()
        edges = {tuple(sorted(c.bricks)): c.id for c in g.connections()}
        g.remove_connections([edges[(0, 2)]])
        assert len(g.components()) == 1
        g.check_invariants()


def four_cycle():
    """0 and 1 side by side, 2 bridges their tops, 3 bridges their bottoms."""
    a = Assembly()
    a.place_brick(brick_type(6, 2, 1), (0, 0, 0, 0), brick_id=3)
    a.place_brick(brick_type(2, 2), (0, 0, 1, 0), brick_id=0)
    a.place_brick(brick_type(2, 2), (4, 0, 1, 0), brick_id=1)
    _, conns = a.place_brick(brick_type(6, 2, 1), (0, 0, 4, 0), brick_id=2)
    assert len(conns) == 2
    return a.graph, a


def exhaustive_min_cut(graph, overloaded, worst):
    """Brute force smallest overloaded subset containing `worst` whose
    removal separates the endpoints of `worst`."""
    worst_conn = graph.connection(worst)
    src, dst = worst_conn.bricks
    others = sorted(set(overloaded) - {worst})
    best = None
    for size in range(0, len(others) + 1):
        candidates = []
        for combo in itertools.combinations(others, size):
            removed = set(combo) | {worst}
            if separates(graph, removed, src, dst):
                candidates.append(tuple(sorted(removed)))
        if candidates:
            best = min(candidates)
            break
    return set(best) if best else None


def separates(graph, removed, src, dst):
    adj = {}
    for c in graph.connections():
        if c.id in removed:
            continue
        u, v = c.bricks
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    seen = {src}
    stack = [src]
    while stack:
        cur = stack.pop()
        for nxt in adj.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return dst not in seen


class TestMinimalBreakageSet:
    def test_single_edge_cut(self):
        g = TopologyGraph()
        bricks = simple_bricks(3)
        conns = []
        for b in bricks:
            g.add_brick(b.id)
        for lo in range(2):
            c, t = make_connection(g, bricks[lo], bricks[lo + 1])
            g.add_connection(c, t)
            conns.append(c)
        out = g.minimal_breakage_set({conns[0].id, conns[1].id}, conns[0].id)
        assert out == {conns[0].id}

    def test_cycle_needs_two(self):
        g, _ = four_cycle()
        ids = {c.id for c in g.connections()}
        worst = min(ids)
        out = g.minimal_breakage_set(ids, worst)
        assert len(out) == 2
        assert worst in out
        assert out == exhaustive_min_cut(g, ids, worst)
        worst_conn = g.connection(worst)
        g.remove_connections(out)
        assert g.anchor_of(worst_conn.bricks[0]) != g.anchor_of(worst_conn.bricks[1])

    def test_infinite_parallel_falls_back_to_worst(self):
        g = TopologyGraph()
        lower = BrickInstance(0, brick_type(2, 4), grid_pose=(0, 0, 0, 0))
        upper = BrickInstance(1, brick_type(2, 4), grid_pose=(0, 0, 3, 0))
        g.add_brick(0)
        g.add_brick(1)
        c1, t1 = make_connection(g, lower, upper)
        c2, t2 = make_connection(g, lower, upper)
        g.add_connection(c1, t1)
        g.add_connection(c2, t2)
        out = g.minimal_breakage_set({c1.id}, c1.id)
        assert out == {c1.id}

    def test_lexicographic_tie_break(self):
        g, _ = four_cycle()
        ids = sorted(c.id for c in g.connections())
        worst = ids[0]
        out = g.minimal_breakage_set(set(ids), worst)
        # among all 2-cuts containing worst, the sorted-tuple smallest wins
        candidates = []
        for other in ids[1:]:
            s = {worst, other}
            wc = g.connection(worst)
            if separates(g, s, *wc.bricks):
                candidates.append(tuple(sorted(s)))
        assert tuple(sorted(out)) == min(candidates)


class TestFuzz:
    def test_random_add_remove_preserves_invariants(self):
        rng = np.random.default_rng(7)
        bt = brick_type(2, 2)
        g = TopologyGraph()
        poses = {}
        for i in range(12):
            g.add_brick(i)
            poses[i] = BrickInstance(i, bt, grid_pose=(2 * (i % 4), 2 * ((i // 4) % 3), 3 * (i % 5), 0))
        live = []
        for step in range(600):
            if live and rng.random() < 0.4:
                victim = live.pop(rng.integers(len(live)))
                g.remove_connections([victim])
            else:
                lo, hi = rng.choice(12, size=2, replace=False)
                lower, upper = poses[lo], poses[hi]
                conn, T = make_connection(g, lower, upper, (int(rng.integers(-1, 2)), int(rng.integers(-1, 2))), 0)
                try:
                    g.add_connection(conn, T)
                    live.append(conn.id)
                except ConsistencyViolation:
                    pass
            if step % 50 == 0:
                g.check_invariants()
        g.check_invariants()

    def test_breakage_matches_exhaustive_on_random_graphs(self):
        rng = np.random.default_rng(13)
        bt = brick_type(2, 2)
        for trial in range(30):
            g = TopologyGraph()
            n = int(rng.integers(3, 7))
            bricks = [BrickInstance(i, bt, grid_pose=(0, 0, 3 * i, 0)) for i in range(n)]
            for b in bricks:
                g.add_brick(b.id)
            conns = []
            for _ in range(int(rng.integers(n - 1, min(12, n * 2)))):
                lo, hi = sorted(rng.choice(n, size=2, replace=False))
                c, T = make_connection(g, bricks[lo], bricks[hi])
                try:
                    g.add_connection(c, T)
                    conns.append(c.id)
                except ConsistencyViolation:
                    continue
            if not conns:
                continue
            comp = g.component_of(g.connection(conns[0]).bricks[0])
            in_comp = [c for c in conns if g.connection(c).bricks[0] in comp]
            k = int(rng.integers(1, len(in_comp) + 1))
            overloaded = set(rng.choice(in_comp, size=k, replace=False).tolist())
            worst = min(overloaded)
            got = g.minimal_breakage_set(overloaded, worst)
            expect = exhaustive_min_cut(g, overloaded, worst)
            if expect is None:
                assert got == {worst}
            else:
                assert len(got) == len(expect), (got, expect)
                assert tuple(sorted(got)) == tuple(sorted(expect))
