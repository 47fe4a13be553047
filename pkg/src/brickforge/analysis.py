"""Static stability analysis over a whole assembly: per-component system
build, lexicographic solve under gravity targets, and the aggregated
stability report."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import Assembly
from .breakage import (
    LexicographicSolver,
    SolveOutcome,
    StabilityVerdict,
    stability_verdict,
    static_targets,
)
from .equilibrium import MaterialParams, brick_state, build_system
from .qp import AdmmSettings


@dataclass
class ComponentReport:
    anchor: int
    bricks: list[int]
    stable: bool
    cause: str | None
    projection_residual_rel: float
    max_relaxation: float
    utilizations: dict[int, float]
    relaxations: dict[int, float]
    stresses: dict[int, float]
    timings_ms: dict[str, float]


@dataclass
class StabilityReport:
    stable: bool
    cause: str | None
    components: list[ComponentReport]
    solve_ms: float

    def stress_of(self, brick_id: int) -> float:
        for comp in self.components:
            if brick_id in comp.stresses:
                return comp.stresses[brick_id]
        return 0.0

    def to_dict(self, include_timings: bool = False) -> dict:
        """Deterministic JSON-ready form; wall-clock timings are only
        included on request so reports stay byte-stable across runs."""
        out = {
            "verdict": "stable" if self.stable else "unstable",
            "cause": self.cause,
            "components": [
                {
                    "anchor": c.anchor,
                    "bricks": sorted(c.bricks),
                    "verdict": "stable" if c.stable else "unstable",
                    "cause": c.cause,
                    "projection_residual_rel": c.projection_residual_rel,
                    "max_relaxation": c.max_relaxation,
                    "utilization": {str(k): c.utilizations[k] for k in sorted(c.utilizations)},
                    "relaxation": {str(k): c.relaxations[k] for k in sorted(c.relaxations)},
                    "stress": {str(k): c.stresses[k] for k in sorted(c.stresses)},
                }
                for c in self.components
            ],
        }
        if include_timings:
            out["solve_ms"] = self.solve_ms
            for cd, c in zip(out["components"], self.components):
                cd["timings_ms"] = dict(sorted(c.timings_ms.items()))
        return out


def analyze_assembly(
    assembly: Assembly,
    params: MaterialParams | None = None,
    settings: AdmmSettings | None = None,
) -> StabilityReport:
    params = params or MaterialParams()
    t_start = time.perf_counter()
    components = []
    for comp in assembly.graph.components():
        anchor = min(comp)
        states = {bid: brick_state(assembly.bricks[bid]) for bid in comp}
        conns = [
            c for c in assembly.graph.connections() if c.stud_brick in comp and c.hole_brick in comp
        ]
        system = build_system(states, conns, params, with_ground=True)
        targets = static_targets(states, system)
        solver = LexicographicSolver(system, settings, polish=True)
        outcome = solver.solve(targets)
        verdict = stability_verdict(outcome)
        scale = max(StabilityVerdict.PROJECTION_SCALE_FLOOR, float(np.linalg.norm(outcome.b)))
        stresses = dict(outcome.stresses)
        for bid in comp:
            stresses.setdefault(bid, 0.0)
        components.append(
            ComponentReport(
                anchor=anchor,
                bricks=sorted(comp),
                stable=verdict.stable,
                cause=verdict.cause,
                projection_residual_rel=outcome.projection_residual / scale,
                max_relaxation=outcome.max_relaxation,
                utilizations=dict(outcome.utilizations),
                relaxations=dict(outcome.v_star),
                stresses=stresses,
                timings_ms=dict(outcome.timings_ms),
            )
        )
    components.sort(key=lambda c: c.anchor)
    unstable = [c for c in components if not c.stable]
    return StabilityReport(
        stable=not unstable,
        cause=unstable[0].cause if unstable else None,
        components=components,
        solve_ms=(time.perf_counter() - t_start) * 1e3,
    )
