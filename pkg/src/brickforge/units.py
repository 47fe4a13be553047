"""Brick geometry: unit constants, brick types, interfaces and snap-fit
contact point generation.

World coordinates are meters; the discrete grid is (stud pitch, plate
height) units. Connection-frame point coordinates (u_f, v_f, z_f) are in
millimeters, which keeps the traction-field basis well conditioned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .transforms import FLIP_X, Transform

MM = 1e-3  # meters per millimeter

GRAVITY = 9.81  # m/s^2


@dataclass(frozen=True)
class UnitConstants:
    """Physical brick constants, lengths in millimeters."""

    L_U: float = 8.0  # stud pitch
    H_P: float = 3.2  # plate height
    H_B: float = 9.6  # brick height (3 plates)
    H_S: float = 1.7  # stud height / pre-engagement gap
    r_s: float = 2.4  # stud radius

    def __post_init__(self):
        if min(self.L_U, self.H_P, self.H_B, self.H_S, self.r_s) <= 0:
            raise ValueError("unit constants must be strictly positive")
        if abs(self.H_B - 3 * self.H_P) > 1e-12:
            raise ValueError("H_B must equal 3 * H_P")


UNITS = UnitConstants()

# Default effective density in g/cm^3; a 2x4 brick then weighs ~2.31 g.
DEFAULT_DENSITY = 0.47


@dataclass(frozen=True)
class BrickType:
    width_studs: int
    length_studs: int
    height_plates: int = 3
    has_stud_interface: bool = True
    has_hole_interface: bool = True
    effective_density: float = DEFAULT_DENSITY  # g/cm^3

    def __post_init__(self):
        if self.width_studs < 1 or self.length_studs < 1 or self.height_plates < 1:
            raise ValueError("brick dimensions must be >= 1")
        if self.effective_density <= 0:
            raise ValueError("density must be positive")

    @property
    def size_m(self) -> np.ndarray:
        """Bounding box (meters): width x length x height."""
        return np.array(
            [
                self.width_studs * UNITS.L_U,
                self.length_studs * UNITS.L_U,
                self.height_plates * UNITS.H_P,
            ]
        ) * MM

    @property
    def mass(self) -> float:
        """Mass in kg from effective density over the bounding box."""
        w, l, h = self.size_m
        volume_cm3 = w * l * h * 1e6  # m^3 -> cm^3
        return self.effective_density * volume_cm3 * 1e-3  # g -> kg

    @property
    def com_local(self) -> np.ndarray:
        """Center of mass in the brick frame (origin at min corner)."""
        return self.size_m / 2.0

    def inertia_local(self) -> np.ndarray:
        """Solid-cuboid inertia tensor about the COM, kg m^2."""
        w, l, h = self.size_m
        m = self.mass
        return np.diag(
            [
                m / 12.0 * (l * l + h * h),
                m / 12.0 * (w * w + h * h),
                m / 12.0 * (w * w + l * l),
            ]
        )

    def spec(self) -> str:
        return f"{self.width_studs}x{self.length_studs}x{self.height_plates}"


@lru_cache(maxsize=None)
def brick_type(width: int, length: int, height_plates: int = 3, density: float = DEFAULT_DENSITY) -> BrickType:
    return BrickType(width, length, height_plates, effective_density=density)


@dataclass
class BrickInstance:
    """A brick with an optional integer grid pose and a derived world pose.

    Grid pose is (x_unit, y_unit, z_plate, yaw_quadrant); the world pose is
    exact for committed assemblies and free-floating during dynamics.
    """

    id: int
    type: BrickType
    grid_pose: tuple[int, int, int, int] | None = None
    world_pose: Transform = field(default_factory=Transform.identity)
    grounded: bool = False
    color: str = "gray"

    def __post_init__(self):
        if self.grid_pose is not None:
            x, y, z, yaw = self.grid_pose
            if yaw not in (0, 1, 2, 3):
                raise ValueError("yaw quadrant must be in {0,1,2,3}")
            self.world_pose = grid_transform(x, y, z, yaw)

    @property
    def mass(self) -> float:
        return self.type.mass

    def com_world(self) -> np.ndarray:
        return self.world_pose.apply(self.type.com_local)

    def stud_interface(self) -> "Interface | None":
        if not self.type.has_stud_interface:
            return None
        return Interface(self.id, "stud", (self.type.width_studs, self.type.length_studs), _stud_local_frame(self.type))

    def hole_interface(self) -> "Interface | None":
        if not self.type.has_hole_interface:
            return None
        return Interface(self.id, "hole", (self.type.width_studs, self.type.length_studs), _hole_local_frame(self.type))


def grid_transform(x_unit: int, y_unit: int, z_plate: int, yaw_quadrant: int) -> Transform:
    """World pose implied by an integer grid pose.

    The brick frame origin is the min corner of the footprint after yaw;
    rotation is about the brick frame origin.
    """
    t = np.array([x_unit * UNITS.L_U, y_unit * UNITS.L_U, z_plate * UNITS.H_P]) * MM
    return Transform.from_quadrant(yaw_quadrant, t)


def _stud_local_frame(bt: BrickType) -> Transform:
    # Origin at grid cell (0,0) center on the top face, z outward (up).
    c = UNITS.L_U / 2 * MM
    return Transform.from_translation([c, c, bt.height_plates * UNITS.H_P * MM])


def _hole_local_frame(bt: BrickType) -> Transform:
    # Origin at grid cell (0,0) center on the bottom face, z outward (down).
    c = UNITS.L_U / 2 * MM
    return Transform(FLIP_X.copy(), np.array([c, c, 0.0]))


@dataclass(frozen=True)
class Interface:
    """A stud or hole connection region on one brick face."""

    owner: int
    polarity: str  # "stud" | "hole"
    grid_dims: tuple[int, int]
    local_frame: Transform  # brick frame -> interface frame, z outward

    def mating_frame_local(self) -> Transform:
        """Interface frame flipped (for holes) so z runs up the stud axis."""
        if self.polarity == "hole":
            return self.local_frame @ Transform(FLIP_X.copy())
        return self.local_frame

    def world_mating_frame(self, brick_pose: Transform) -> Transform:
        return brick_pose @ self.mating_frame_local()


@dataclass(frozen=True)
class ContactPointSpec:
    """One snap-fit contact point in the connection frame (mm)."""

    position: tuple[float, float, float]  # (u_f, v_f, z_f)
    normal: tuple[float, float]  # inward radial normal, (u, v) components
    stud_index: int

    @property
    def tangent(self) -> tuple[float, float]:
        # t_f = n_hat_k x n_f for n_f horizontal: rotate by +90 deg in plane
        nu, nv = self.normal
        return (-nv, nu)


def footprint_polygon(brick: BrickInstance, face: str) -> np.ndarray:
    """4-vertex rectangle (world, meters) of the top or bottom face.

    Counter-clockwise when viewed from outside the brick.
    """
    w, l, h = brick.type.size_m
    z = h if face == "top" else 0.0
    if face == "top":
        corners = [(0, 0, z), (w, 0, z), (w, l, z), (0, l, z)]
    elif face == "bottom":
        # CCW seen from below (outside) = CW seen from above.
        corners = [(0, 0, z), (0, l, z), (w, l, z), (w, 0, z)]
    else:
        raise ValueError(f"unknown face {face!r}")
    return brick.world_pose.apply(np.array(corners, dtype=float))


def engaged_studs(
    conn_params: tuple[tuple[int, int], int],
    stud_iface: Interface,
    hole_iface: Interface,
) -> list[tuple[int, int]]:
    """Stud grid cells engaged by the hole grid under offset/yaw (o, psi).

    Returns (i, j) stud-cell indices, sorted; empty when overlap is empty.
    A stud cell (i, j) is engaged when its image under the inverse discrete
    transform lands inside the hole grid.
    """
    (ox, oy), psi = conn_params
    sw, sl = stud_iface.grid_dims
    hw, hl = hole_iface.grid_dims
    out = []
    for i in range(sw):
        for j in range(sl):
            # hole-grid coordinates of this stud cell
            dx, dy = i - ox, j - oy
            q = psi % 4
            if q == 0:
                hx, hy = dx, dy
            elif q == 1:
                hx, hy = dy, -dx
            elif q == 2:
                hx, hy = -dx, -dy
            else:
                hx, hy = -dy, dx
            if 0 <= hx < hw and 0 <= hy < hl:
                out.append((i, j))
    return out


def stud_centers_connection_frame(
    engaged: list[tuple[int, int]],
    conn_params: tuple[tuple[int, int], int],
) -> list[tuple[float, float]]:
    """Engaged stud centers in hole-grid (connection) coordinates, mm."""
    (ox, oy), psi = conn_params
    out = []
    for (i, j) in engaged:
        dx, dy = i - ox, j - oy
        q = psi % 4
        if q == 0:
            hx, hy = dx, dy
        elif q == 1:
            hx, hy = dy, -dx
        elif q == 2:
            hx, hy = -dx, -dy
        else:
            hx, hy = -dy, dx
        out.append((hx * UNITS.L_U, hy * UNITS.L_U))
    return out


# Contact angular layouts, radians. Four-point tube contact sits on the
# cell diagonals; three-point wall contact is a 120-degree trine anchored
# to the upper brick's long axis.
_FOUR_POINT_ANGLES = tuple(math.radians(a) for a in (45.0, 135.0, 225.0, 315.0))
_THREE_POINT_ANGLES = tuple(math.radians(a) for a in (90.0, 210.0, 330.0))


def generate_contact_points(
    engaged: list[tuple[int, int]],
    upper_brick_type: BrickType,
    conn_params: tuple[tuple[int, int], int],
) -> list[ContactPointSpec]:
    """Per engaged stud, the 3- or 4-point contact set in the connection
    frame (mm), sorted by stud index then angle.

    The connection frame origin sits at the centroid of the engaged stud
    centers on the stud-tip plane, so all points lie at z_f = -H_S/2
    (mid-engagement). Normals point inward toward each stud axis.
    """
    if not engaged:
        raise ValueError("no engaged studs")
    centers = stud_centers_connection_frame(engaged, conn_params)
    cx = sum(c[0] for c in centers) / len(centers)
    cy = sum(c[1] for c in centers) / len(centers)

    wide = upper_brick_type.width_studs >= 2 and upper_brick_type.length_studs >= 2
    if wide:
        angles = _FOUR_POINT_ANGLES
        base = 0.0
    else:
        angles = _THREE_POINT_ANGLES
        # Long axis of the 1-wide upper brick in its own (hole grid) frame:
        # y when length >= width, else x.
        base = math.pi / 2 if upper_brick_type.length_studs >= upper_brick_type.width_studs else 0.0

    z_f = -UNITS.H_S / 2
    points = []
    order = sorted(range(len(centers)), key=lambda k: engaged[k])
    for rank, k in enumerate(order):
        sx, sy = centers[k][0] - cx, centers[k][1] - cy
        for a in angles:
            phi = base + a
            du, dv = math.cos(phi), math.sin(phi)
            points.append(
                ContactPointSpec(
                    position=(sx + UNITS.r_s * du, sy + UNITS.r_s * dv, z_f),
                    normal=(-du, -dv),
                    stud_index=rank,
                )
            )
    return points
