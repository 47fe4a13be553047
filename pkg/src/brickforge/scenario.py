"""Assembly document I/O.

Documents are JSON with integer grid coordinates (x, y in stud units, z
in plate units, yaw in quarter turns), so loaded poses are exact and
connections can be re-derived deterministically. Auto-detection is
canonical; an explicit connection list, when present, must match it.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .assembly import Assembly, OverlapError
from .units import DEFAULT_DENSITY, BrickType

FORMAT_VERSION = "brickforge/1"
UNITS_NOTE = "grid: x,y in 8 mm studs; z in 3.2 mm plates; yaw in quarter turns"

_TYPE_RE = re.compile(r"^(\d+)x(\d+)(?:x(\d+))?$")


class SchemaError(ValueError):
    pass


class ConnectionMismatch(ValueError):
    pass


def parse_type(spec, custom_types: dict[str, BrickType]) -> BrickType:
    if isinstance(spec, str) and spec in custom_types:
        return custom_types[spec]
    if not isinstance(spec, str):
        raise SchemaError(f"brick type must be a string, got {spec!r}")
    m = _TYPE_RE.match(spec)
    if not m:
        raise SchemaError(f"malformed brick type {spec!r} (expected WxL or WxLxP)")
    w, l, p = int(m.group(1)), int(m.group(2)), int(m.group(3) or 3)
    if min(w, l, p) < 1:
        raise SchemaError(f"brick type dimensions must be >= 1: {spec!r}")
    return BrickType(w, l, p)


def type_spec(bt: BrickType) -> str:
    return f"{bt.width_studs}x{bt.length_studs}x{bt.height_plates}"


def load_assembly(doc: dict) -> Assembly:
    """Build an assembly from a document; raises SchemaError /
    OverlapError / ConnectionMismatch."""
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {doc.get('format_version')!r}")
    bricks = doc.get("bricks")
    if not isinstance(bricks, list) or not bricks:
        raise SchemaError("document needs a nonempty 'bricks' list")

    custom_types = {}
    for name, spec in (doc.get("brick_types") or {}).items():
        try:
            custom_types[name] = BrickType(
                int(spec["width"]),
                int(spec["length"]),
                int(spec.get("height_plates", 3)),
                effective_density=float(spec.get("density", DEFAULT_DENSITY)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad brick_types entry {name!r}: {exc}") from exc

    assembly = Assembly()
    seen = set()
    for i, entry in enumerate(bricks):
        if not isinstance(entry, dict):
            raise SchemaError(f"bricks[{i}] must be an object")
        try:
            brick_id = int(entry["id"])
            pos = entry["pos"]
            yaw = int(entry.get("yaw", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bricks[{i}]: {exc}") from exc
        if brick_id in seen:
            raise SchemaError(f"duplicate brick id {brick_id}")
        seen.add(brick_id)
        if (
            not isinstance(pos, (list, tuple))
            or len(pos) != 3
            or not all(isinstance(v, int) or (isinstance(v, float) and v.is_integer()) for v in pos)
        ):
            raise SchemaError(f"bricks[{i}].pos must be three integers")
        if yaw not in (0, 1, 2, 3):
            raise SchemaError(f"bricks[{i}].yaw must be in 0..3")
        bt = parse_type(entry.get("type"), custom_types)
        grid_pose = (int(pos[0]), int(pos[1]), int(pos[2]), yaw)
        assembly.place_brick(
            bt,
            grid_pose,
            grounded=bool(entry.get("grounded", False)),
            color=str(entry.get("color", "gray")),
            brick_id=brick_id,
        )

    explicit = doc.get("connections")
    if explicit is not None:
        detected = {
            (c.stud_brick, c.hole_brick, tuple(c.offset), c.psi)
            for c in assembly.graph.connections()
        }
        listed = set()
        for i, e in enumerate(explicit):
            try:
                listed.add((int(e["stud"]), int(e["hole"]), (int(e["o"][0]), int(e["o"][1])), int(e["psi"])))
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                raise SchemaError(f"connections[{i}]: {exc}") from exc
        if listed != detected:
            raise ConnectionMismatch(
                f"explicit connections disagree with detection: extra={sorted(listed - detected)}, missing={sorted(detected - listed)}"
            )
    return assembly


def save_assembly(assembly: Assembly, meta: dict | None = None) -> dict:
    """Canonical document: sorted brick ids, explicit fields, detected
    connections included."""
    custom = {}
    entries = []
    for bid in sorted(assembly.bricks):
        b = assembly.bricks[bid]
        bt = b.type
        if abs(bt.effective_density - DEFAULT_DENSITY) > 1e-12:
            name = f"t{bt.width_studs}x{bt.length_studs}x{bt.height_plates}d{bt.effective_density:g}"
            custom[name] = bt
            spec = name
        else:
            spec = type_spec(bt)
        if b.grid_pose is None:
            raise ValueError(f"brick {bid} has no grid pose; only committed assemblies serialize")
        x, y, z, yaw = b.grid_pose
        entries.append(
            {
                "id": bid,
                "type": spec,
                "pos": [x, y, z],
                "yaw": yaw,
                "grounded": b.grounded,
                "color": b.color,
            }
        )
    doc = {
        "format_version": FORMAT_VERSION,
        "units": UNITS_NOTE,
        "bricks": entries,
        "connections": [
            {
                "stud": c.stud_brick,
                "hole": c.hole_brick,
                "o": [c.offset[0], c.offset[1]],
                "psi": c.psi,
            }
            for c in assembly.graph.connections()
        ],
    }
    if custom:
        doc["brick_types"] = {
            name: {
                "width": bt.width_studs,
                "length": bt.length_studs,
                "height_plates": bt.height_plates,
                "density": bt.effective_density,
            }
            for name, bt in sorted(custom.items())
        }
    if meta:
        doc["meta"] = meta
    return doc


def dumps_canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def loads(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
