"""Deterministic simulator of the 16x16x16 construction board.

Parts occupy one cell (or two for bridge kinds), must rest on the ground
or on an occupied cell directly below, and are placed/removed through
immutable state transitions.  Coordinates are 1-based: x is the column
(x=1 leftmost), y is the row (y=1 top), z is the height (z=1 ground).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple

GRID_SIZE = 16


class PartKind(str, Enum):
    SCREW = "screw"
    NUT = "nut"
    WASHER = "washer"
    HORIZONTAL_BRIDGE = "horizontal-bridge"
    VERTICAL_BRIDGE = "vertical-bridge"
    BOLT = "bolt"
    GASKET = "gasket"
    HEX_NUT = "hex-nut"
    SQUARE_NUT = "square-nut"

    @property
    def is_bridge(self) -> bool:
        return self in (PartKind.HORIZONTAL_BRIDGE, PartKind.VERTICAL_BRIDGE)


class Color(str, Enum):
    BLUE = "blue"
    ORANGE = "orange"
    RED = "red"
    GREEN = "green"
    YELLOW = "yellow"
    PURPLE = "purple"
    BLACK = "black"
    WHITE = "white"
    BROWN = "brown"
    MAGENTA = "magenta"


SINGLE_CELL_KINDS = tuple(k for k in PartKind if not k.is_bridge)


class Cell(NamedTuple):
    x: int
    y: int
    z: int

    def offset(self, dx: int, dy: int, dz: int) -> "Cell":
        return Cell(self.x + dx, self.y + dy, self.z + dz)

    @property
    def in_bounds(self) -> bool:
        return all(1 <= c <= GRID_SIZE for c in self)


class GridError(Exception):
    """Base class for board rule violations."""


class OutOfBounds(GridError):
    def __init__(self, cell: Cell):
        self.cell = cell
        super().__init__(f"cell {tuple(cell)} is outside the {GRID_SIZE}^3 board")


class Occupied(GridError):
    def __init__(self, cell: Cell):
        self.cell = cell
        super().__init__(f"cell {tuple(cell)} is already occupied")


class Unsupported(GridError):
    def __init__(self, cells: tuple[Cell, ...]):
        self.cells = cells
        first = tuple(cells[0])
        super().__init__(f"no support under footprint starting at {first}")


class Empty(GridError):
    def __init__(self, cell: Cell):
        self.cell = cell
        super().__init__(f"cell {tuple(cell)} is empty")


class WouldFloat(GridError):
    def __init__(self, part_id: int):
        self.part_id = part_id
        super().__init__(f"removal would leave part {part_id} floating")


@dataclass(frozen=True)
class PlacedPart:
    id: int
    kind: PartKind
    color: Color
    anchor: Cell
    cells: tuple[Cell, ...]

    def record(self) -> dict:
        """Snapshot record in the place-action field layout plus the id."""
        rec = {
            "id": self.id,
            "part": self.kind.value,
            "color": self.color.value,
            "x": self.anchor.x,
            "y": self.anchor.y,
            "z": self.anchor.z,
        }
        if self.kind is PartKind.HORIZONTAL_BRIDGE:
            rec["x2"] = self.cells[1].x
        elif self.kind is PartKind.VERTICAL_BRIDGE:
            rec["y2"] = self.cells[1].y
        return rec


def footprint(kind: PartKind, anchor: Cell) -> tuple[Cell, ...]:
    """Cells the part would occupy when anchored at `anchor`."""
    if not anchor.in_bounds:
        raise OutOfBounds(anchor)
    if kind is PartKind.HORIZONTAL_BRIDGE:
        second = anchor.offset(1, 0, 0)
    elif kind is PartKind.VERTICAL_BRIDGE:
        second = anchor.offset(0, 1, 0)
    else:
        return (anchor,)
    if not second.in_bounds:
        raise OutOfBounds(second)
    return (anchor, second)


@dataclass(frozen=True)
class GridState:
    """Immutable occupancy of the board plus the applied-action history."""

    occupancy: dict[Cell, int] = field(default_factory=dict)
    parts: dict[int, PlacedPart] = field(default_factory=dict)
    history: tuple[dict, ...] = ()
    next_id: int = 1

    def part_at(self, cell: Cell) -> PlacedPart | None:
        pid = self.occupancy.get(cell)
        return self.parts[pid] if pid is not None else None

    def parts_in_order(self) -> list[PlacedPart]:
        return [self.parts[pid] for pid in sorted(self.parts)]

    def drop_height(self, kind: PartKind, x: int, y: int) -> int:
        """Lowest z at which the footprint anchored at (x, y) is free and supported."""
        return drop_height(self.occupancy.keys(), kind, x, y)

    def snapshot(self) -> list[dict]:
        return [p.record() for p in self.parts_in_order()]

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), separators=(",", ":"))


def supported(state: GridState, kind: PartKind, cells: Iterable[Cell]) -> bool:
    """Gravity rule: single-cell parts need ground or an occupied cell directly
    below; a bridge needs that for at least one of its two cells."""
    return supported_by(state.occupancy.keys(), kind, cells)


def supported_by(occupied, kind: PartKind, cells: Iterable[Cell]) -> bool:
    cells = tuple(cells)
    holds = [c.z == 1 or c.offset(0, 0, -1) in occupied for c in cells]
    if kind.is_bridge:
        return any(holds)
    return all(holds)


def drop_height(occupied, kind: PartKind, x: int, y: int) -> int:
    """Lowest z at which the footprint anchored at (x, y) is free and
    supported over the given occupied-cell collection."""
    for z in range(1, GRID_SIZE + 1):
        cells = footprint(kind, Cell(x, y, z))
        if any(c in occupied for c in cells):
            continue
        if supported_by(occupied, kind, cells):
            return z
    raise OutOfBounds(Cell(x, y, GRID_SIZE + 1))


def place(state: GridState, kind: PartKind, color: Color, anchor: Cell) -> GridState:
    cells = footprint(kind, anchor)
    for c in cells:
        if c in state.occupancy:
            raise Occupied(c)
    if not supported(state, kind, cells):
        raise Unsupported(cells)
    part = PlacedPart(state.next_id, kind, color, anchor, cells)
    occupancy = dict(state.occupancy)
    for c in cells:
        occupancy[c] = part.id
    parts = dict(state.parts)
    parts[part.id] = part
    action = place_action(kind, color, anchor)
    return GridState(occupancy, parts, state.history + (action,), state.next_id + 1)


def remove(state: GridState, cell: Cell) -> GridState:
    if not cell.in_bounds:
        raise OutOfBounds(cell)
    pid = state.occupancy.get(cell)
    if pid is None:
        raise Empty(cell)
    part = state.parts[pid]
    occupancy = {c: i for c, i in state.occupancy.items() if i != pid}
    parts = {i: p for i, p in state.parts.items() if i != pid}
    trimmed = GridState(occupancy, parts, state.history, state.next_id)
    for other in parts.values():
        if not supported(trimmed, other.kind, other.cells):
            raise WouldFloat(other.id)
    action = remove_action(cell)
    return GridState(occupancy, parts, state.history + (action,), state.next_id)


def place_action(kind: PartKind, color: Color, anchor: Cell) -> dict:
    action = {
        "action": "place",
        "part": kind.value,
        "color": color.value,
        "x": anchor.x,
        "y": anchor.y,
        "z": anchor.z,
    }
    if kind is PartKind.HORIZONTAL_BRIDGE:
        action["x2"] = anchor.x + 1
    elif kind is PartKind.VERTICAL_BRIDGE:
        action["y2"] = anchor.y + 1
    return action


def remove_action(cell: Cell) -> dict:
    return {"action": "remove", "x": cell.x, "y": cell.y, "z": cell.z}


def apply_action(state: GridState, action: dict) -> GridState:
    """Apply one wire-format action record."""
    if action.get("action") == "place":
        kind = PartKind(action["part"])
        color = Color(action["color"])
        anchor = Cell(action["x"], action["y"], action["z"])
        return place(state, kind, color, anchor)
    if action.get("action") == "remove":
        return remove(state, Cell(action["x"], action["y"], action["z"]))
    raise ValueError(f"unknown action record: {action!r}")


def validate(state: GridState) -> None:
    """Full-state consistency check, usable as a test oracle.

    Raises AssertionError when occupancy and parts disagree or any part
    violates the support rule.
    """
    seen: dict[Cell, int] = {}
    for part in state.parts.values():
        expected = footprint(part.kind, part.anchor)
        assert part.cells == expected, f"part {part.id} cells do not match footprint"
        for c in part.cells:
            assert c not in seen, f"cell {tuple(c)} owned by two parts"
            seen[c] = part.id
            assert state.occupancy.get(c) == part.id, (
                f"occupancy missing cell {tuple(c)} of part {part.id}"
            )
    assert seen == dict(state.occupancy), "occupancy references unknown cells"
    for part in state.parts.values():
        assert supported(state, part.kind, part.cells), f"part {part.id} floats"
