"""Assembly monitor: snap-candidate detection between stud and hole
interfaces, force gating, and exact discrete snapping transforms.

A candidate is evaluated in the stud interface's mating frame: the raw
relative pose is rounded to the nearest grid offset and quarter-turn yaw,
then judged against the geometric tolerances. Rejection is encoded in the
candidate, never raised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transforms import Transform, wrap_angle
from .units import MM, UNITS, BrickInstance, Interface, engaged_studs


@dataclass(frozen=True)
class SnapTolerances:
    eps_z: float = 1.0  # mm
    eps_tilt: float = math.radians(5.0)
    eps_psi: float = math.radians(5.0)
    eps_xy: float = 2.0  # mm
    f_asm: float = 1.0  # N

    def __post_init__(self):
        if min(self.eps_z, self.eps_tilt, self.eps_psi, self.eps_xy, self.f_asm) <= 0:
            raise ValueError("tolerances must be strictly positive")


# For load-time auto-detection of connections between exact grid poses;
# only floating-point noise is tolerated.
EXACT_TOLERANCES = SnapTolerances(
    eps_z=1e-6, eps_tilt=1e-9, eps_psi=1e-9, eps_xy=1e-6, f_asm=1.0
)


@dataclass(frozen=True)
class SnapCandidate:
    stud_iface: Interface
    hole_iface: Interface
    raw_transform: Transform  # hole mating frame in stud mating frame
    offset: tuple[int, int]
    psi: int  # quadrant 0..3
    vertical_residual: float  # mm
    tilt_residual: float  # rad
    yaw_residual: float  # rad
    planar_residual: float  # mm
    engaged_count: int
    engaged: tuple[tuple[int, int], ...]
    accepted: bool

    @property
    def residuals(self) -> tuple[float, float, float, float]:
        return (self.vertical_residual, self.tilt_residual, self.yaw_residual, self.planar_residual)


def snap_candidate(
    stud_iface: Interface,
    stud_pose: Transform,
    hole_iface: Interface,
    hole_pose: Transform,
    tol: SnapTolerances,
) -> SnapCandidate:
    """Evaluate one stud/hole interface pair under the given brick poses.

    stud_pose / hole_pose are the owning bricks' world poses. The vertical
    residual is the distance to the nearer of the pre-engagement gap H_S
    and the committed flush gap 0, so re-snapping a committed pose yields
    zero residuals.
    """
    s = stud_iface.world_mating_frame(stud_pose)
    h = hole_iface.world_mating_frame(hole_pose)
    T = s.inverse() @ h
    t_mm = T.t / MM

    tilt = math.acos(float(np.clip(T.R[2, 2], -1.0, 1.0)))
    yaw = math.atan2(T.R[1, 0], T.R[0, 0])
    psi_steps = round(yaw / (math.pi / 2))
    yaw_residual = abs(wrap_angle(yaw - psi_steps * math.pi / 2))
    psi = psi_steps % 4

    offset = (round(t_mm[0] / UNITS.L_U), round(t_mm[1] / UNITS.L_U))
    planar = math.hypot(t_mm[0] - offset[0] * UNITS.L_U, t_mm[1] - offset[1] * UNITS.L_U)
    vertical = min(abs(t_mm[2] - UNITS.H_S), abs(t_mm[2]))

    engaged = tuple(engaged_studs((offset, psi), stud_iface, hole_iface))
    accepted = (
        vertical <= tol.eps_z
        and tilt <= tol.eps_tilt
        and yaw_residual <= tol.eps_psi
        and planar <= tol.eps_xy
        and len(engaged) > 0
    )
    return SnapCandidate(
        stud_iface=stud_iface,
        hole_iface=hole_iface,
        raw_transform=T,
        offset=offset,
        psi=psi,
        vertical_residual=vertical,
        tilt_residual=tilt,
        yaw_residual=yaw_residual,
        planar_residual=planar,
        engaged_count=len(engaged),
        engaged=engaged,
        accepted=accepted,
    )


def candidate_pairs(
    brick_a: BrickInstance,
    brick_b: BrickInstance,
    tol: SnapTolerances,
) -> list[SnapCandidate]:
    """All snap candidates between two bricks, in both stud/hole roles."""
    out = []
    for lower, upper in ((brick_a, brick_b), (brick_b, brick_a)):
        stud = lower.stud_interface()
        hole = upper.hole_interface()
        if stud is None or hole is None:
            continue
        out.append(snap_candidate(stud, lower.world_pose, hole, upper.world_pose, tol))
    return out


def force_gate(normal_impulse: float, dt: float, tol: SnapTolerances) -> bool:
    """True when the step's compressive impulse along the stud axis,
    converted to an average force, reaches the assembly threshold."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return normal_impulse / dt >= tol.f_asm


def exact_discrete_transform(offset: tuple[int, int], psi: int) -> Transform:
    """Hole mating frame in the stud mating frame implied by (o, psi),
    with flush vertical spacing."""
    t = np.array([offset[0] * UNITS.L_U, offset[1] * UNITS.L_U, 0.0]) * MM
    return Transform.from_quadrant(psi, t)


def exact_edge_transform(
    stud_iface: Interface,
    hole_iface: Interface,
    offset: tuple[int, int],
    psi: int,
) -> Transform:
    """Pose of the hole brick in the stud brick's frame implied by the
    discrete connection parameters."""
    return (
        stud_iface.mating_frame_local()
        @ exact_discrete_transform(offset, psi)
        @ hole_iface.mating_frame_local().inverse()
    )
