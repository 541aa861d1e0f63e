"""External memory: structures as relational graphs, plus API workflows.

A built structure is stored coordinate-free: each connected component is an
adjacency list whose edges carry unit directions between touching cells.
Re-applying a stored graph at a new start regenerates concrete coordinates
by breadth-first traversal; color/part/size variants substitute attributes
or route through nearest-neighbor scaling.  The same abstract-then-apply
cycle covers API workflow templates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .grid import GRID_SIZE, Cell, Color, OutOfBounds, PartKind, footprint

DIRECTIONS = {
    "+x": (1, 0, 0),
    "-x": (-1, 0, 0),
    "+y": (0, 1, 0),
    "-y": (0, -1, 0),
    "+z": (0, 0, 1),
    "-z": (0, 0, -1),
}
_DIR_ORDER = ["+x", "-x", "+y", "-y", "+z", "-z"]
_OPPOSITE = {"+x": "-x", "-x": "+x", "+y": "-y", "-y": "+y", "+z": "-z", "-z": "+z"}


class UnknownShape(Exception):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no stored shape named {name!r}")


class UnknownWorkflow(Exception):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no stored workflow named {name!r}")


class UnscalableShape(Exception):
    pass


class InvalidOverride(Exception):
    pass


class SlotMismatch(Exception):
    def __init__(self, expected: int, got: int):
        super().__init__(f"documentation lists {expected} slots but the example has {got} arguments")


class MissingBinding(Exception):
    def __init__(self, slot: str):
        self.slot = slot
        super().__init__(f"no binding for slot {slot!r}")


@dataclass(frozen=True)
class PartPlacement:
    """A concrete part: what apply_at and scale_shape produce and consume."""

    kind: PartKind
    color: Color
    anchor: Cell

    @property
    def cells(self) -> tuple[Cell, ...]:
        return footprint(self.kind, self.anchor)


@dataclass(frozen=True)
class GraphEdge:
    to: int
    direction: str  # key of DIRECTIONS
    src_cell: int   # index into the source part's footprint
    dst_cell: int   # index into the target part's footprint


@dataclass
class GraphNode:
    id: int
    kind: PartKind
    color: Color
    edges: list[GraphEdge] = field(default_factory=list)


@dataclass
class ShapeGraph:
    """Per-component adjacency lists; coordinates survive only as the
    offsets between component reference parts."""

    name: str
    components: list[list[GraphNode]]
    firsts_offsets: list[tuple[int, int, int]]
    version: int = 1

    @property
    def part_count(self) -> int:
        return sum(len(c) for c in self.components)

    def has_bridges(self) -> bool:
        return any(n.kind.is_bridge for comp in self.components for n in comp)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "firsts_offsets": [list(o) for o in self.firsts_offsets],
            "components": [
                [
                    {
                        "id": n.id,
                        "kind": n.kind.value,
                        "color": n.color.value,
                        "edges": [
                            {"to": e.to, "dir": e.direction, "src": e.src_cell, "dst": e.dst_cell}
                            for e in n.edges
                        ],
                    }
                    for n in comp
                ]
                for comp in self.components
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ShapeGraph":
        components = [
            [
                GraphNode(
                    id=n["id"],
                    kind=PartKind(n["kind"]),
                    color=Color(n["color"]),
                    edges=[GraphEdge(e["to"], e["dir"], e["src"], e["dst"]) for e in n["edges"]],
                )
                for n in comp
            ]
            for comp in data["components"]
        ]
        return cls(
            name=data["name"],
            components=components,
            firsts_offsets=[tuple(o) for o in data["firsts_offsets"]],
            version=data.get("version", 1),
        )


def _adjacent_cell_pairs(a_cells, b_cells):
    """Yields (src_idx, direction, dst_idx) for unit-adjacent cell pairs."""
    for i, ca in enumerate(a_cells):
        for d in _DIR_ORDER:
            dx, dy, dz = DIRECTIONS[d]
            target = Cell(ca.x + dx, ca.y + dy, ca.z + dz)
            for j, cb in enumerate(b_cells):
                if cb == target:
                    yield i, d, j


def to_graph(structure, name: str = "") -> ShapeGraph:
    """Converts placed parts into the relational-graph form.

    Parts are nodes; two parts are neighbors when any of their cells touch
    face-to-face.  Component discovery follows placement order, so the
    first part placed is the reference of component 0.
    """
    parts = list(structure)
    if not parts:
        raise ValueError("cannot abstract an empty structure")
    cells = [tuple(p.cells) for p in parts]

    neighbor_sets: list[set[int]] = [set() for _ in parts]
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            if any(True for _ in _adjacent_cell_pairs(cells[i], cells[j])):
                neighbor_sets[i].add(j)
                neighbor_sets[j].add(i)

    component_of: dict[int, int] = {}
    component_members: list[list[int]] = []
    for i in range(len(parts)):
        if i in component_of:
            continue
        comp_id = len(component_members)
        stack, members = [i], []
        component_of[i] = comp_id
        while stack:
            u = stack.pop()
            members.append(u)
            for v in neighbor_sets[u]:
                if v not in component_of:
                    component_of[v] = comp_id
                    stack.append(v)
        component_members.append(sorted(members))

    components: list[list[GraphNode]] = []
    for members in component_members:
        local = {part_idx: node_id for node_id, part_idx in enumerate(members)}
        nodes = [GraphNode(local[m], parts[m].kind, parts[m].color) for m in members]
        for m in members:
            for n in neighbor_sets[m]:
                if component_of[n] != component_of[m] or n <= m:
                    continue
                src, direction, dst = next(_adjacent_cell_pairs(cells[m], cells[n]))
                nodes[local[m]].edges.append(GraphEdge(local[n], direction, src, dst))
                nodes[local[n]].edges.append(GraphEdge(local[m], _OPPOSITE[direction], dst, src))
        for node in nodes:
            node.edges.sort(key=lambda e: (_DIR_ORDER.index(e.direction), e.to))
        components.append(nodes)

    firsts = [parts[members[0]].anchor for members in component_members]
    offsets = component_offsets_from_firsts(firsts)
    return ShapeGraph(name=name, components=components, firsts_offsets=offsets)


def component_offsets_from_firsts(firsts: list[Cell]) -> list[tuple[int, int, int]]:
    """Offsets of each component's reference part from component 0's."""
    ref = firsts[0]
    return [(c.x - ref.x, c.y - ref.y, c.z - ref.z) for c in firsts]


def _footprint_delta(kind: PartKind, cell_idx: int) -> tuple[int, int, int]:
    if cell_idx == 0:
        return (0, 0, 0)
    if kind is PartKind.HORIZONTAL_BRIDGE:
        return (1, 0, 0)
    if kind is PartKind.VERTICAL_BRIDGE:
        return (0, 1, 0)
    raise ValueError(f"{kind.value} has no cell index {cell_idx}")


def apply_at(
    graph: ShapeGraph,
    start: Cell,
    color_override: Color | None = None,
    part_override: PartKind | None = None,
    size_override: float | None = None,
) -> list[PartPlacement]:
    """Regenerates the stored structure with component 0's reference part
    anchored at `start`; other components follow their stored offsets.

    Returns placements ordered so every part's support precedes it.
    Collisions with existing parts are the executor's check, not ours.
    """
    if part_override is not None:
        if graph.has_bridges() or part_override.is_bridge:
            raise InvalidOverride("part substitution requires single-cell parts on both sides")

    placements: list[tuple[int, int, PartPlacement]] = []  # (component, bfs order, part)
    for comp_idx, nodes in enumerate(graph.components):
        off = graph.firsts_offsets[comp_idx]
        comp_start = start.offset(*off)
        anchor: dict[int, Cell] = {0: comp_start}
        order = [0]
        queue = [0]
        while queue:
            u = queue.pop(0)
            u_node = nodes[u]
            u_cells = footprint_unchecked(u_node.kind, anchor[u])
            for edge in u_node.edges:
                if edge.to in anchor:
                    continue
                v_node = nodes[edge.to]
                d = DIRECTIONS[edge.direction]
                dst_cell = Cell(*(a + b for a, b in zip(u_cells[edge.src_cell], d)))
                delta = _footprint_delta(v_node.kind, edge.dst_cell)
                anchor[edge.to] = Cell(dst_cell.x - delta[0], dst_cell.y - delta[1], dst_cell.z - delta[2])
                order.append(edge.to)
                queue.append(edge.to)
        for rank, node_id in enumerate(order):
            node = nodes[node_id]
            placements.append(
                (
                    comp_idx,
                    rank,
                    PartPlacement(
                        kind=part_override or node.kind,
                        color=color_override or node.color,
                        anchor=anchor[node_id],
                    ),
                )
            )

    result: list[PartPlacement] = []
    for comp_idx in range(len(graph.components)):
        comp = [(rank, p) for c, rank, p in placements if c == comp_idx]
        comp.sort(key=lambda rp: (rp[1].anchor.z, rp[0]))
        result.extend(p for _, p in comp)

    if size_override is not None and size_override != 1.0:
        result = scale_shape(result, _scaled_box(result, size_override))

    for p in result:
        for cell in footprint_unchecked(p.kind, p.anchor):
            if not cell.in_bounds:
                raise OutOfBounds(cell)
    return result


def footprint_unchecked(kind: PartKind, anchor: Cell) -> tuple[Cell, ...]:
    """Footprint without bounds checks; apply_at validates at the end so the
    error names the real offending cell."""
    if kind is PartKind.HORIZONTAL_BRIDGE:
        return (anchor, anchor.offset(1, 0, 0))
    if kind is PartKind.VERTICAL_BRIDGE:
        return (anchor, anchor.offset(0, 1, 0))
    return (anchor,)


def _bounding_box(placements: list[PartPlacement]) -> tuple[Cell, tuple[int, int, int]]:
    all_cells = [c for p in placements for c in footprint_unchecked(p.kind, p.anchor)]
    lo = Cell(min(c.x for c in all_cells), min(c.y for c in all_cells), min(c.z for c in all_cells))
    dims = (
        max(c.x for c in all_cells) - lo.x + 1,
        max(c.y for c in all_cells) - lo.y + 1,
        max(c.z for c in all_cells) - lo.z + 1,
    )
    return lo, dims


def _scaled_box(placements: list[PartPlacement], factor: float) -> tuple[Cell, tuple[int, int, int]]:
    lo, dims = _bounding_box(placements)
    target = tuple(max(1, min(GRID_SIZE, int(d * factor + 0.5))) for d in dims)
    return lo, target


def scale_shape(
    placements: list[PartPlacement],
    target_box: tuple[Cell, tuple[int, int, int]],
) -> list[PartPlacement]:
    """Nearest-neighbor rescale onto `target_box` = (min corner, dims).

    Each target cell inherits kind and color from the source cell at
    floor(t * S / T) along every axis.  Bridge cells are re-paired along
    the bridge axis; a scale that strands an odd bridge cell is rejected.
    """
    src_lo, src_dims = _bounding_box(placements)
    tgt_lo, tgt_dims = target_box
    if any(d < 1 or d > GRID_SIZE for d in tgt_dims):
        raise OutOfBounds(Cell(*tgt_dims))

    cell_owner: dict[tuple[int, int, int], int] = {}
    for idx, p in enumerate(placements):
        for c in footprint_unchecked(p.kind, p.anchor):
            cell_owner[(c.x - src_lo.x, c.y - src_lo.y, c.z - src_lo.z)] = idx

    if tuple(tgt_dims) == tuple(src_dims) and tgt_lo == src_lo:
        return list(placements)

    target_cells_by_part: dict[int, list[Cell]] = {}
    for tx in range(tgt_dims[0]):
        for ty in range(tgt_dims[1]):
            for tz in range(tgt_dims[2]):
                sx = tx * src_dims[0] // tgt_dims[0]
                sy = ty * src_dims[1] // tgt_dims[1]
                sz = tz * src_dims[2] // tgt_dims[2]
                owner = cell_owner.get((sx, sy, sz))
                if owner is None:
                    continue
                cell = Cell(tgt_lo.x + tx, tgt_lo.y + ty, tgt_lo.z + tz)
                target_cells_by_part.setdefault(owner, []).append(cell)

    result: list[PartPlacement] = []
    for idx in sorted(target_cells_by_part):
        source = placements[idx]
        cells = sorted(target_cells_by_part[idx])
        if not source.kind.is_bridge:
            result.extend(PartPlacement(source.kind, source.color, c) for c in cells)
            continue
        axis = 0 if source.kind is PartKind.HORIZONTAL_BRIDGE else 1
        remaining = set(cells)
        for c in cells:
            if c not in remaining:
                continue
            partner = c.offset(1, 0, 0) if axis == 0 else c.offset(0, 1, 0)
            if partner in remaining:
                remaining.discard(c)
                remaining.discard(partner)
                result.append(PartPlacement(source.kind, source.color, c))
        if remaining:
            raise UnscalableShape(
                f"scaling leaves {len(remaining)} unpaired {source.kind.value} cell(s)"
            )
    result.sort(key=lambda p: (p.anchor.z, p.anchor.y, p.anchor.x))
    return result


def shapes_equivalent(a, b, compare_color: bool = True) -> bool:
    """True iff some translation maps the parts of `a` onto the parts of `b`
    preserving kind (and color when requested) - i.e. a bijection keeping
    all pairwise relative positions."""

    def normalize(parts):
        parts = list(parts)
        if not parts:
            return ()
        all_cells = [c for p in parts for c in p.cells]
        lo = (min(c.x for c in all_cells), min(c.y for c in all_cells), min(c.z for c in all_cells))
        keyed = []
        for p in parts:
            rel = (p.anchor.x - lo[0], p.anchor.y - lo[1], p.anchor.z - lo[2])
            keyed.append((rel, p.kind.value, p.color.value if compare_color else ""))
        return tuple(sorted(keyed))

    return normalize(a) == normalize(b)


# --- stores -------------------------------------------------------------------


class ShapeMemory:
    """Named shape graphs; names are case-insensitive, re-store bumps the
    version.  Persistence is a single human-diffable JSON file."""

    FORMAT = 1

    def __init__(self):
        self._shapes: dict[str, ShapeGraph] = {}

    def store(self, name: str, graph: ShapeGraph) -> ShapeGraph:
        if not name or not name.strip():
            raise ValueError("shape name must be nonempty")
        key = name.strip().casefold()
        version = self._shapes[key].version + 1 if key in self._shapes else 1
        stored = ShapeGraph(
            name=name.strip(),
            components=graph.components,
            firsts_offsets=graph.firsts_offsets,
            version=version,
        )
        self._shapes[key] = stored
        return stored

    def retrieve(self, name: str) -> ShapeGraph:
        key = name.strip().casefold()
        if key not in self._shapes:
            raise UnknownShape(name)
        return self._shapes[key]

    def __contains__(self, name: str) -> bool:
        return name.strip().casefold() in self._shapes

    def listing(self) -> list[dict]:
        return [
            {"name": g.name, "version": g.version, "parts": g.part_count}
            for _, g in sorted(self._shapes.items())
        ]

    def save(self, path: str | Path) -> None:
        data = {
            "format": self.FORMAT,
            "shapes": {k: g.to_json() for k, g in sorted(self._shapes.items())},
        }
        Path(path).write_text(json.dumps(data, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "ShapeMemory":
        data = json.loads(Path(path).read_text())
        if data.get("format") != cls.FORMAT:
            raise ValueError(f"unsupported shape library format: {data.get('format')!r}")
        mem = cls()
        for key, payload in data["shapes"].items():
            mem._shapes[key] = ShapeGraph.from_json(payload)
        return mem


# --- workflow templates -------------------------------------------------------


@dataclass(frozen=True)
class WorkflowCall:
    name: str
    args: tuple = ()

    def render(self) -> str:
        return f"{self.name}({', '.join(repr(a) for a in self.args)})"


@dataclass(frozen=True)
class WorkflowTemplate:
    name: str
    slots: tuple[tuple[str, str], ...]  # (slot name, semantic role)
    example_binding: tuple[tuple[str, object], ...]

    @property
    def slot_names(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.slots)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "slots": [list(s) for s in self.slots],
            "example_binding": {k: v for k, v in self.example_binding},
        }

    @classmethod
    def from_json(cls, data: dict) -> "WorkflowTemplate":
        return cls(
            name=data["name"],
            slots=tuple((s[0], s[1]) for s in data["slots"]),
            example_binding=tuple(data["example_binding"].items()),
        )


def abstract_workflow(example: WorkflowCall, doc_slots) -> WorkflowTemplate:
    """Replaces the example's concrete argument values with named slots.

    `doc_slots` is the documented slot list: names, or (name, role) pairs.
    """
    slots = tuple((s, s) if isinstance(s, str) else (s[0], s[1]) for s in doc_slots)
    if len(slots) != len(example.args):
        raise SlotMismatch(len(slots), len(example.args))
    non_boolean = [a for a in example.args if not isinstance(a, bool)]
    if len(non_boolean) < 2:
        raise ValueError("workflow abstraction needs at least two non-boolean arguments")
    binding = tuple(zip((s for s, _ in slots), example.args))
    return WorkflowTemplate(name=example.name, slots=slots, example_binding=binding)


def apply_workflow(template: WorkflowTemplate, bindings: dict) -> WorkflowCall:
    args = []
    for slot in template.slot_names:
        if slot not in bindings:
            raise MissingBinding(slot)
        args.append(bindings[slot])
    return WorkflowCall(template.name, tuple(args))


class WorkflowMemory:
    FORMAT = 1

    def __init__(self):
        self._workflows: dict[str, WorkflowTemplate] = {}

    def store(self, name: str, template: WorkflowTemplate) -> None:
        if not name or not name.strip():
            raise ValueError("workflow name must be nonempty")
        self._workflows[name.strip().casefold()] = template

    def retrieve(self, name: str) -> WorkflowTemplate:
        key = name.strip().casefold()
        if key not in self._workflows:
            raise UnknownWorkflow(name)
        return self._workflows[key]

    def save(self, path: str | Path) -> None:
        data = {
            "format": self.FORMAT,
            "workflows": {k: t.to_json() for k, t in sorted(self._workflows.items())},
        }
        Path(path).write_text(json.dumps(data, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "WorkflowMemory":
        data = json.loads(Path(path).read_text())
        if data.get("format") != cls.FORMAT:
            raise ValueError(f"unsupported workflow library format: {data.get('format')!r}")
        mem = cls()
        for key, payload in data["workflows"].items():
            mem._workflows[key] = WorkflowTemplate.from_json(payload)
        return mem
