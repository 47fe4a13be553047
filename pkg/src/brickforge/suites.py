"""Deterministic benchmark fixture generators with analytic ground truth.

Every fixture carries an expected verdict computed by a closed-form
oracle (see oracles.py), never by the QP pipeline, and generators reject
samples whose worst demand/capacity ratio falls in the gray zone so
solver tolerances cannot flip a label.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import Assembly
from .oracles import chain_verdict, connection_moment_capacity, impact_cut_demand
from .scenario import save_assembly
from .units import GRAVITY, BrickType, brick_type

SUITE_NAMES = ("towers", "cantilevers", "bridges", "necks", "random-stable", "random-fragile")

_MARGIN = 0.15  # generators keep every cut this far from its boundary


class UnknownSuite(ValueError):
    pass


@dataclass
class Fixture:
    name: str
    assembly: Assembly
    expected_stable: bool
    expected_cause: str | None
    family: str
    drop: dict | None = None  # neck fixtures: expected drop-test outcome

    def document(self) -> dict:
        meta = {
            "family": self.family,
            "expected_verdict": "stable" if self.expected_stable else "unstable",
        }
        if self.expected_cause:
            meta["expected_cause"] = self.expected_cause
        if self.drop:
            meta["drop"] = self.drop
        return save_assembly(self.assembly, meta=meta)


def generate_suite(name: str, count: int = 8) -> list[Fixture]:
    if name == "towers":
        return towers(count)
    if name == "cantilevers":
        return cantilevers(count)
    if name == "bridges":
        return bridges(count)
    if name == "necks":
        return necks()
    if name == "random-stable":
        return random_chains(count, stable=True)
    if name == "random-fragile":
        return random_chains(count, stable=False)
    raise UnknownSuite(f"unknown suite {name!r} (expected one of {SUITE_NAMES})")


def towers(count: int) -> list[Fixture]:
    """Aligned single-column towers; all stable."""
    out = []
    for i in range(count):
        height = 2 + i
        a = Assembly()
        for level in range(height):
            a.place_brick(brick_type(2, 4), (0, 0, 3 * level, 0), color=f"c{level % 4}")
        stable, cause, _ = chain_verdict(a)
        assert stable, "tower oracle must be stable"
        out.append(Fixture(f"tower_{height:02d}", a, True, None, "towers"))
    return out


_CRANE_PAYLOAD = BrickType(2, 1, 40, effective_density=1.4)


def crane(arm_length: int) -> Assembly:
    """Grounded 1x1 post, 1-wide arm on a single root stud, dense payload
    on the arm tip. The root connection is the weak cut."""
    a = Assembly()
    a.place_brick(brick_type(1, 1), (0, 0, 0, 0), grounded=True, color="base")
    a.place_brick(BrickType(arm_length, 1, 3), (0, 0, 3, 0), color="arm")
    a.place_brick(_CRANE_PAYLOAD, (arm_length - 2, 0, 6, 0), color="payload")
    return a


def crane_oracle(arm_length: int) -> tuple[bool, float]:
    """(stable, demand/capacity) for the crane via the root moment check."""
    a = crane(arm_length)
    root = [c for c in a.graph.connections() if c.stud_brick == 0][0]
    edge_x = 0.008  # far edge of the 1x1 root cell
    cap = connection_moment_capacity(a, root.id, edge_x)
    arm = a.bricks[1]
    payload = a.bricks[2]
    demand = sum(
        b.mass * GRAVITY * (b.com_world()[0] - edge_x) for b in (arm, payload)
    )
    return demand <= cap, demand / cap


def cantilevers(count: int) -> list[Fixture]:
    """Arm-length sweep crossing the friction-capacity boundary."""
    out = []
    for L in range(2, 2 + count):
        stable, ratio = crane_oracle(L)
        assert abs(ratio - 1.0) > 0.05, f"cantilever L={L} too close to critical ({ratio:.3f})"
        out.append(
            Fixture(
                f"cantilever_{L}",
                crane(L),
                stable,
                None if stable else "friction-overload",
                "cantilevers",
            )
        )
    return out


def bridges(count: int) -> list[Fixture]:
    """Two piers and a deck; compression-only, always stable."""
    out = []
    for i in range(count):
        span = 2 + i
        a = Assembly()
        a.place_brick(brick_type(2, 2), (0, 0, 0, 0), color="pier")
        a.place_brick(brick_type(2, 2), (span + 2, 0, 0, 0), color="pier")
        a.place_brick(BrickType(span + 4, 2, 1), (0, 0, 3, 0), color="deck")
        assert len(a.graph.components()) == 1
        out.append(Fixture(f"bridge_{span:02d}", a, True, None, "bridges"))
    return out


_NECK_PAYLOAD = BrickType(2, 1, 10, effective_density=1.4)
NECK_DROP_HEIGHT = 0.144  # meters, roughly 15 brick heights
NECK_DT = 1.0 / 240.0


def neck_fixture(k: int) -> Assembly:
    """Base slab, 1-wide beam overlapping the base by k studs (the neck),
    payload on the overhanging end."""
    a = Assembly()
    a.place_brick(brick_type(12, 3), (0, 0, 0, 0), color="base")
    a.place_brick(BrickType(8, 1, 3), (12 - k, 1, 3, 0), color="beam")
    a.place_brick(_NECK_PAYLOAD, (18 - k, 1, 6, 0), color="payload")
    return a


def neck_oracle(k: int, drop_height: float = NECK_DROP_HEIGHT, dt: float = NECK_DT) -> dict:
    """Impact-impulse vs capacity comparison for the neck connection."""
    a = neck_fixture(k)
    neck = [c for c in a.graph.connections() if {c.stud_brick, c.hole_brick} == {0, 1}][0]
    edge_x = 0.096  # base right edge (12 studs)
    cap = connection_moment_capacity(a, neck.id, edge_x)
    demand = impact_cut_demand(a, [1, 2], edge_x, drop_height, dt)
    return {
        "k": k,
        "breaks": bool(demand > cap),
        "ratio": demand / cap,
        "neck_bricks": [0, 1],
        "capacity": cap,
        "demand": demand,
    }


def necks(ks=(1, 2, 4)) -> list[Fixture]:
    out = []
    for k in ks:
        a = neck_fixture(k)
        stable, cause, ratio = chain_oracle_for_neck(a)
        assert stable, f"neck k={k} must be statically stable (got {cause}, ratio {ratio})"
        drop = neck_oracle(k)
        decisive = drop["ratio"] >= 1.6 if drop["breaks"] else drop["ratio"] <= 0.6
        assert decisive, f"neck k={k} drop ratio {drop['ratio']:.2f} too marginal"
        out.append(Fixture(f"neck_{k}", a, True, None, "necks", drop=drop))
    return out


def chain_oracle_for_neck(a: Assembly) -> tuple[bool, str | None, float]:
    return chain_verdict(a)


def rigid_block(levels: int = 4) -> Assembly:
    """Interleaved over-connected slab stack; survives drops intact."""
    a = Assembly()
    for level in range(levels):
        if level % 2 == 0:
            for x in (0, 4):
                a.place_brick(brick_type(4, 4), (x, 0, 3 * level, 0), color="a")
        else:
            a.place_brick(brick_type(8, 2), (0, 0, 3 * level, 0), color="b")
            a.place_brick(brick_type(8, 2), (0, 2, 3 * level, 0), color="b")
    assert len(a.graph.components()) == 1
    return a


def random_chains(count: int, stable: bool, seed: int = 20240811) -> list[Fixture]:
    """Seeded serial-chain stacks with decisive oracle margins.

    Fragile samples rotate through toppling stacks, friction-overload
    cranes and floating pieces.
    """
    rng = np.random.default_rng(seed + (0 if stable else 1))
    out = []
    attempts = 0
    while len(out) < count and attempts < 4000:
        attempts += 1
        kind = len(out) % 3
        if stable:
            fixture = _sample_chain(rng, want_stable=True)
        elif kind == 0:
            fixture = _sample_chain(rng, want_stable=False)
        elif kind == 1:
            L = int(rng.integers(7, 10))
            ok, ratio = crane_oracle(L)
            fixture = None
            if not ok and ratio > 1.0 + _MARGIN:
                fixture = Fixture(f"fragile_crane_{L}", crane(L), False, "friction-overload", "random-fragile")
        else:
            fixture = _floating_fixture(rng)
        if fixture is None:
            continue
        fixture = Fixture(
            f"{'stable' if stable else 'fragile'}_{len(out):03d}_{fixture.name}",
            fixture.assembly,
            fixture.expected_stable,
            fixture.expected_cause,
            "random-stable" if stable else "random-fragile",
        )
        out.append(fixture)
    if len(out) < count:
        raise RuntimeError("could not sample enough decisive fixtures")
    return out


def _sample_chain(rng, want_stable: bool) -> Fixture | None:
    from .oracles import chain_summary

    levels = int(rng.integers(3, 7))
    widths = [int(rng.integers(2, 5)) for _ in range(levels)]
    positions = [0]
    for i in range(1, levels):
        # keep at least one stud of overlap with the brick below
        lo = positions[i - 1] - (widths[i] - 1)
        hi = positions[i - 1] + widths[i - 1] - 1
        positions.append(int(rng.integers(lo, hi + 1)))
    a = Assembly()
    for i in range(levels):
        a.place_brick(BrickType(widths[i], 2, 3), (positions[i], 0, 3 * i, 0), color=f"l{i}")
    if len(a.graph.components()) != 1:
        return None
    s = chain_summary(a)
    excursion_mm = s.topple_excursion * 1e3
    if want_stable:
        if not s.stable or s.friction_ratio > 1.0 - _MARGIN:
            return None
        if s.topple_margin > -_MARGIN or excursion_mm > -2.5:
            return None
        return Fixture(f"chain{levels}", a, True, None, "random-stable")
    if s.stable:
        return None
    if s.cause == "toppling" and (s.topple_margin < _MARGIN or excursion_mm < 2.5):
        return None
    if s.cause == "friction-overload" and (
        s.friction_ratio < 1.0 + _MARGIN or s.topple_margin > -_MARGIN or excursion_mm > -2.5
    ):
        return None
    return Fixture(f"chain{levels}", a, False, s.cause, "random-fragile")


def _floating_fixture(rng) -> Fixture:
    a = Assembly()
    a.place_brick(brick_type(2, 4), (0, 0, 0, 0))
    a.place_brick(brick_type(2, 2), (int(rng.integers(4, 8)), 0, int(rng.integers(4, 8)), 0))
    return Fixture("floating", a, False, "toppling", "random-fragile")
