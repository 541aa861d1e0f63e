"""Compiles resolved placements into an action program and runs it
transactionally against the board: all actions apply or none do."""

from __future__ import annotations

from dataclasses import dataclass, field

from .grid import Cell, GridError, GridState, apply_action, place_action, remove_action
from .memory import PartPlacement

ALLOWED_SOURCES = {"utterance", "answer", "memory", "derived"}


class IncompleteSpec(Exception):
    """A null or unsourced field reached the executor; this indicates a bug
    in the discourse module, not a user error."""

    def __init__(self, field_name: str):
        self.field = field_name
        super().__init__(f"spec reached the executor with unusable field {field_name!r}")


@dataclass(frozen=True)
class ResolvedPlacement:
    """A fully specified part placement with per-field provenance."""

    kind: object
    color: object
    x: int
    y: int
    z: int
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_spec(cls, spec) -> "ResolvedPlacement":
        return cls(spec.kind, spec.color, spec.x, spec.y, spec.z, dict(spec.provenance))

    @classmethod
    def from_placement(cls, p: PartPlacement) -> "ResolvedPlacement":
        prov = {f: "memory" for f in ("kind", "color", "x", "y", "z")}
        return cls(p.kind, p.color, p.anchor.x, p.anchor.y, p.anchor.z, prov)


@dataclass(frozen=True)
class RemoveRequest:
    x: int
    y: int
    z: int


@dataclass(frozen=True)
class ActionProgram:
    actions: tuple[dict, ...]
    origin: str = ""

    def to_json(self) -> list[dict]:
        return [dict(a) for a in self.actions]


def compile(resolved: list, origin: str = "") -> ActionProgram:
    """One wire-format action per placement, support-ordered (stable by
    height).  Every field must be non-null and carry an allowed provenance
    tag: values may come only from the utterance, a clarification answer,
    memory retrieval, or locator derivation."""
    placements = []
    removals = []
    for item in resolved:
        if isinstance(item, RemoveRequest):
            removals.append(item)
            continue
        for f in ("kind", "color", "x", "y", "z"):
            if getattr(item, f) is None:
                raise IncompleteSpec(f)
            if item.provenance.get(f) not in ALLOWED_SOURCES:
                raise IncompleteSpec(f)
        placements.append(item)

    placements.sort(key=lambda p: p.z)
    actions = [place_action(p.kind, p.color, Cell(p.x, p.y, p.z)) for p in placements]
    actions += [remove_action(Cell(r.x, r.y, r.z)) for r in removals]
    return ActionProgram(tuple(actions), origin)


@dataclass
class ExecutionLog:
    entries: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e["status"] == "ok" for e in self.entries)

    @property
    def failure(self) -> dict | None:
        for e in self.entries:
            if e["status"] == "error":
                return e
        return None

    def to_json_lines(self) -> str:
        import json

        return "\n".join(json.dumps(e, separators=(",", ":")) for e in self.entries)


def run(program: ActionProgram, grid: GridState) -> tuple[GridState, ExecutionLog]:
    """Applies the program in order; any failure returns the original grid
    untouched and a log naming the failing action."""
    log = ExecutionLog()
    state = grid
    for index, action in enumerate(program.actions):
        try:
            state = apply_action(state, action)
        except GridError as err:
            log.entries.append(
                {
                    "index": index,
                    "action": action,
                    "status": "error",
                    "error": type(err).__name__,
                    "message": str(err),
                }
            )
            return grid, log
        log.entries.append({"index": index, "action": action, "status": "ok"})
    return state, log
