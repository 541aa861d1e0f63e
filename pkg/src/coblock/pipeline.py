"""Turn orchestration: parse, locate, build, clarify, execute.

Each user turn is parsed into placement specs and memory commands, located
against the current board, and run through the clarification loop until
every spec is fully specified; the compiled action program then executes
atomically.  A turn that fails leaves the board exactly as it was.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from . import grammar
from .backends import AgentPrompt, DeterministicBackend, GatewayError, extract_json
from .executor import ActionProgram, ExecutionLog, RemoveRequest, ResolvedPlacement, compile as compile_program, run as run_program
from .grid import Cell, GridState, OutOfBounds, PartKind, drop_height, footprint
from .grammar import (
    NameCommand,
    PartialPlacementSpec,
    RecallCommand,
    RemoveCommand,
    Unparseable,
    parse_color_answer,
    parse_coordinate_answer,
    parse_kind_answer,
    resolve_relative,
    spec_to_dict,
)
from .memory import (
    InvalidOverride,
    PartPlacement,
    ShapeMemory,
    UnknownShape,
    UnscalableShape,
    to_graph,
)

MAX_REASKS = 3


@dataclass
class TurnOutcome:
    kind: str  # "clarify" | "execute" | "stored" | "error"
    question: str | None = None
    question_id: str | None = None
    program: ActionProgram | None = None
    log: ExecutionLog | None = None
    actions: list = dc_field(default_factory=list)
    stored_names: list = dc_field(default_factory=list)
    new_part_ids: list = dc_field(default_factory=list)
    error: str | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "clarify":
            out["question"] = self.question
            out["question_id"] = self.question_id
        elif self.kind == "execute":
            out["actions"] = list(self.actions)
            out["new_part_ids"] = list(self.new_part_ids)
            if self.stored_names:
                out["stored"] = list(self.stored_names)
        elif self.kind == "stored":
            out["stored"] = list(self.stored_names)
        else:
            out["error"] = self.error
        return out

    @classmethod
    def clarify(cls, question: str, question_id: str) -> "TurnOutcome":
        return cls("clarify", question=question, question_id=question_id)

    @classmethod
    def failure(cls, message: str) -> "TurnOutcome":
        return cls("error", error=message)


@dataclass
class _Slot:
    """One clarifiable unit: a placement spec or a recall target."""

    spec: PartialPlacementSpec
    mode: str  # "placement" | "recall-target"
    element_index: int

    def missing(self) -> list[str]:
        if self.mode == "recall-target":
            fields = []
            if self.spec.relative is None:
                if self.spec.x is None:
                    fields.append("x")
                if self.spec.y is None:
                    fields.append("y")
            return fields
        return self.spec.missing_fields()


@dataclass
class ClarificationState:
    elements: list
    slots: list[_Slot]
    asked: dict[str, tuple[int, str]] = dc_field(default_factory=dict)
    answers: dict[str, str] = dc_field(default_factory=dict)
    current_question: str | None = None
    current_question_id: str | None = None
    reasks: int = 0
    rephrase: bool = False  # waiting for a full restatement, not a field value

    def pending(self) -> list[tuple[int, str]]:
        out = []
        for idx, slot in enumerate(self.slots):
            for f in slot.missing():
                out.append((idx, f))
        return out


@dataclass
class SessionContext:
    grid: GridState = dc_field(default_factory=GridState)
    memory: ShapeMemory = dc_field(default_factory=ShapeMemory)
    dialogue: list = dc_field(default_factory=list)
    pending: ClarificationState | None = None
    name_watermark: int = 0
    turn_count: int = 0
    question_count: int = 0
    turn_specs_initial: list = dc_field(default_factory=list)

    def part_records_since(self, watermark: int):
        return [p for p in self.grid.parts_in_order() if p.id > watermark]


class Pipeline:
    """The construction agent: wire a backend in front of the deterministic
    grammar, memory and executor."""

    def __init__(self, backend=None):
        self.backend = backend or DeterministicBackend()
        self._parser_prompt = AgentPrompt.for_role("parser")
        self._locator_prompt = AgentPrompt.for_role("locator")

    def new_session(self, memory: ShapeMemory | None = None) -> SessionContext:
        return SessionContext(memory=memory or ShapeMemory())

    # -- public entry point ----------------------------------------------

    def process_turn(self, ctx: SessionContext, text: str) -> TurnOutcome:
        ctx.turn_count += 1
        ctx.dialogue.append({"role": "architect", "text": text, "outcome": None})
        if ctx.pending is not None:
            outcome = self._handle_answer(ctx, text)
        else:
            outcome = self._handle_instruction(ctx, text)
        ctx.dialogue.append({"role": "system", "text": outcome.question or outcome.error or "", "outcome": outcome.to_json()})
        return outcome

    # -- instruction path --------------------------------------------------

    def _handle_instruction(self, ctx: SessionContext, text: str) -> TurnOutcome:
        try:
            plans = self._normalize(text)
            elements = []
            for plan in plans:
                elements.extend(grammar.parse_instruction(plan))
        except Unparseable:
            return self._ask_rephrase(ctx, text)
        except GatewayError as err:
            return TurnOutcome.failure(f"backend failure: {err}")

        named_here = set()
        for element in elements:
            if isinstance(element, NameCommand):
                named_here.add(element.name.casefold())
            elif isinstance(element, RecallCommand) and element.name not in ctx.memory:
                if element.name.casefold() in named_here:
                    return TurnOutcome.failure(
                        f"store {element.name!r} in its own turn before recalling it"
                    )
                return self._ask_rephrase(
                    ctx, text, note=f"I do not know a shape called {element.name!r}."
                )

        slots = []
        for i, element in enumerate(elements):
            if isinstance(element, PartialPlacementSpec):
                slots.append(_Slot(element, "placement", i))
            elif isinstance(element, RecallCommand):
                slots.append(_Slot(element.target, "recall-target", i))
        ctx.pending = ClarificationState(elements=elements, slots=slots)
        return self._advance(ctx, record_initial=True)

    def _normalize(self, text: str) -> list[str]:
        """Backend pass: the parser agent yields one plan per structure, the
        locator absolutizes each plan.  The deterministic backend returns
        both unchanged."""
        raw = self.backend.complete(self._parser_prompt, [{"role": "user", "content": text}])
        structures = extract_json(raw, "structures")
        plans = []
        for item in structures:
            raw_loc = self.backend.complete(
                self._locator_prompt, [{"role": "user", "content": item["plan"]}]
            )
            plans.append(extract_json(raw_loc, "instruction"))
        return plans

    def _ask_rephrase(self, ctx: SessionContext, text: str, note: str = "") -> TurnOutcome:
        state = ctx.pending
        if state is None or not state.rephrase:
            state = ClarificationState(elements=[], slots=[], rephrase=True)
            ctx.pending = state
        else:
            state.reasks += 1
            if state.reasks >= MAX_REASKS:
                ctx.pending = None
                return TurnOutcome.failure("instruction not understood after repeated attempts")
        ctx.question_count += 1
        qid = f"q{ctx.turn_count}-{ctx.question_count}"
        prefix = note + " " if note else ""
        question = f"{prefix}I could not follow that instruction. Could you rephrase it?"
        state.current_question, state.current_question_id = question, qid
        state.asked[qid] = (-1, "utterance")
        return TurnOutcome.clarify(question, qid)

    # -- answer path -------------------------------------------------------

    def _handle_answer(self, ctx: SessionContext, text: str) -> TurnOutcome:
        state = ctx.pending
        assert state is not None
        qid = state.current_question_id

        if state.rephrase:
            ctx.pending = None
            outcome = self._handle_instruction(ctx, text)
            # carry the re-ask budget across failed restatements
            if outcome.kind == "clarify" and ctx.pending is not None and ctx.pending.rephrase:
                ctx.pending.reasks = state.reasks + 1
                if ctx.pending.reasks >= MAX_REASKS:
                    ctx.pending = None
                    return TurnOutcome.failure("instruction not understood after repeated attempts")
            return outcome

        slot_idx, field = state.asked[qid]
        state.answers[qid] = text
        value = self._parse_answer(field, text)
        if value is None:
            state.reasks += 1
            if state.reasks >= MAX_REASKS:
                ctx.pending = None
                return TurnOutcome.failure(
                    f"could not understand the answer for {field} after {MAX_REASKS} tries"
                )
            return TurnOutcome.clarify(state.current_question, qid)

        state.reasks = 0
        state.slots[slot_idx].spec.set_field(field, value, "answer")
        return self._advance(ctx)

    @staticmethod
    def _parse_answer(field: str, text: str):
        if field == "kind":
            return parse_kind_answer(text)
        if field == "color":
            return parse_color_answer(text)
        if field in ("x", "y", "z"):
            return parse_coordinate_answer(text, field)
        return None

    # -- the locate / clarify / execute cycle -------------------------------

    def _advance(self, ctx: SessionContext, record_initial: bool = False) -> TurnOutcome:
        state = ctx.pending
        try:
            resolved, unresolved_anchors = self._locate_pass(ctx, state)
        except UnknownShape as err:
            return self._ask_rephrase(ctx, "", note=f"I do not know a shape called {err.name!r}.")
        except (InvalidOverride, UnscalableShape, OutOfBounds) as err:
            ctx.pending = None
            return TurnOutcome.failure(str(err))

        if record_initial:
            ctx.turn_specs_initial = [
                spec_to_dict(s.spec) for s in state.slots if s.mode == "placement"
            ]

        pending = state.pending()
        note = ""
        if not pending and unresolved_anchors:
            # the anchor is definitively missing: fall back to absolute
            # coordinates for that spec and ask for them
            slot_idx, note = unresolved_anchors[0]
            state.slots[slot_idx].spec.relation = None
            pending = state.pending()

        if pending:
            slot_idx, field = pending[0]
            question = self._question_text(state, slot_idx, field, note)
            ctx.question_count += 1
            qid = f"q{ctx.turn_count}-{ctx.question_count}"
            state.asked[qid] = (slot_idx, field)
            state.current_question, state.current_question_id = question, qid
            return TurnOutcome.clarify(question, qid)

        ctx.pending = None
        return self._execute(ctx, state, resolved)

    def _locate_pass(self, ctx: SessionContext, state: ClarificationState):
        """Re-derives locations for every element in textual order against a
        virtual board that accumulates this turn's placements.

        Returns the per-element resolutions plus the slots whose dependent
        anchor could not be found ([(slot index, note)]).
        """
        occupied = set(ctx.grid.occupancy)
        anchors = [
            {
                "kind": p.kind,
                "color": p.color,
                "x": p.anchor.x,
                "y": p.anchor.y,
                "z": p.anchor.z,
            }
            for p in ctx.grid.parts_in_order()
        ]
        slot_of_element = {s.element_index: i for i, s in enumerate(state.slots)}
        resolved: list = []
        unresolved_anchors: list[tuple[int, str]] = []

        for elem_idx, element in enumerate(state.elements):
            if isinstance(element, NameCommand):
                resolved.append(element)
                continue
            if isinstance(element, RemoveCommand):
                z = element.z
                if z is None:
                    column = [c.z for c in occupied if c.x == element.x and c.y == element.y]
                    z = max(column) if column else 1
                resolved.append(RemoveRequest(element.x, element.y, z))
                continue
            if isinstance(element, RecallCommand):
                target = element.target
                self._reset_derived(target)
                self._resolve_relative_label(target)
                if target.x is None or target.y is None:
                    resolved.append(None)
                    continue
                graph = ctx.memory.retrieve(element.name)
                if target.z is None:
                    first_kind = element.part_override or graph.components[0][0].kind
                    z = drop_height(occupied, first_kind, target.x, target.y)
                    target.set_field("z", z, "derived")
                placements = self._apply_recall(graph, element, target)
                for p in placements:
                    occupied.update(footprint(p.kind, p.anchor))
                    anchors.append(
                        {"kind": p.kind, "color": p.color, "x": p.anchor.x, "y": p.anchor.y, "z": p.anchor.z}
                    )
                resolved.append([ResolvedPlacement.from_placement(p) for p in placements])
                continue

            spec = element
            self._reset_derived(spec)
            self._normalize_bridge_pair(spec)
            self._resolve_relative_label(spec)
            if spec.relation is not None:
                note = self._resolve_relation(spec, anchors)
                if note:
                    unresolved_anchors.append((slot_of_element[elem_idx], note))
            if spec.x is not None and spec.y is not None and spec.z is None:
                probe_kind = spec.kind or PartKind.NUT
                z = drop_height(occupied, probe_kind, spec.x, spec.y)
                spec.set_field("z", z, "derived")
            if spec.fully_specified():
                occupied.update(footprint(spec.kind, Cell(spec.x, spec.y, spec.z)))
                anchors.append(
                    {"kind": spec.kind, "color": spec.color, "x": spec.x, "y": spec.y, "z": spec.z}
                )
                resolved.append(ResolvedPlacement.from_spec(spec))
            else:
                resolved.append(None)
        return resolved, unresolved_anchors

    @staticmethod
    def _normalize_bridge_pair(spec: PartialPlacementSpec) -> None:
        """Bridge two-index phrasing: the anchor is the lower index; a
        non-consecutive pair cannot form a bridge."""
        if spec.kind is PartKind.HORIZONTAL_BRIDGE and spec.x is not None and spec.x2 is not None:
            lo, hi = sorted((spec.x, spec.x2))
            if hi != lo + 1:
                raise OutOfBounds(Cell(hi, spec.y or 1, spec.z or 1))
            spec.x, spec.x2 = lo, hi
        if spec.kind is PartKind.VERTICAL_BRIDGE and spec.y is not None and spec.y2 is not None:
            lo, hi = sorted((spec.y, spec.y2))
            if hi != lo + 1:
                raise OutOfBounds(Cell(spec.x or 1, hi, spec.z or 1))
            spec.y, spec.y2 = lo, hi

    @staticmethod
    def _reset_derived(spec: PartialPlacementSpec) -> None:
        for f in ("x", "y", "z"):
            if spec.provenance.get(f) == "derived":
                setattr(spec, f, None)
                del spec.provenance[f]

    @staticmethod
    def _resolve_relative_label(spec: PartialPlacementSpec) -> None:
        if spec.relative is not None and (spec.x is None or spec.y is None):
            x, y = resolve_relative(spec.relative)
            spec.set_field("x", x, "derived")
            spec.set_field("y", y, "derived")

    def _resolve_relation(self, spec: PartialPlacementSpec, anchors: list[dict]) -> str:
        """Fills x, y (and z for stacking) from the anchor part.  When no
        prior part matches, returns a note and leaves the coordinates null;
        the most recent matching part wins when several do."""
        ref = spec.relation.target
        match = None
        for cand in reversed(anchors):
            if ref.kind is not None and cand["kind"] != ref.kind:
                continue
            if ref.color is not None and cand["color"] != ref.color:
                continue
            match = cand
            break
        if match is None:
            return f"I cannot find {ref.text} on the board."
        dx, dy, dz = grammar.RELATION_OFFSETS[spec.relation.kind]
        spec.set_field("x", match["x"] + dx, "derived")
        spec.set_field("y", match["y"] + dy, "derived")
        if dz:
            spec.set_field("z", match["z"] + dz, "derived")
        return ""

    def _apply_recall(self, graph, element: RecallCommand, target) -> list[PartPlacement]:
        from .memory import apply_at

        return apply_at(
            graph,
            Cell(target.x, target.y, target.z),
            color_override=element.color_override,
            part_override=element.part_override,
            size_override=element.size_override,
        )

    # -- questions ----------------------------------------------------------

    def _question_text(self, state: ClarificationState, slot_idx: int, field: str, note: str = "") -> str:
        slot = state.slots[slot_idx]
        spec = slot.spec
        placement_slots = [s for s in state.slots if s.mode == "placement"]
        prefix = ""
        if len(placement_slots) > 1 and slot.mode == "placement":
            nth = placement_slots.index(slot) + 1
            prefix = f"For part {nth}: "
        if note:
            prefix = note + " " + prefix

        desc = " ".join(
            w
            for w in (
                spec.color.value if spec.color else "",
                spec.kind.value.replace("-", " ") if spec.kind else "part",
            )
            if w
        )
        if field == "kind":
            where = ""
            if spec.x is not None and spec.y is not None:
                where = f" at column {spec.x}, row {spec.y}"
            return f"{prefix}Which part should I place{where}?"
        if field == "color":
            return f"{prefix}What color should the {spec.kind.value.replace('-', ' ') if spec.kind else 'part'} be?"
        if field == "x":
            return f"{prefix}Which column should the {desc} go in?"
        if field == "y":
            return f"{prefix}Which row should the {desc} go in?"
        return f"{prefix}Which height should the {desc} go at?"

    # -- execution ----------------------------------------------------------

    def _execute(self, ctx: SessionContext, state: ClarificationState, resolved: list) -> TurnOutcome:
        flat: list = []
        names: list[str] = []
        for element, item in zip(state.elements, resolved):
            if isinstance(element, NameCommand):
                names.append(element.name)
            elif isinstance(item, list):
                flat.extend(item)
            elif item is not None:
                flat.append(item)

        program = compile_program(flat, origin=f"turn-{ctx.turn_count}")
        before_max = ctx.grid.next_id - 1
        new_grid, log = run_program(program, ctx.grid)
        if not log.ok:
            failure = log.failure
            return TurnOutcome(
                "error",
                log=log,
                error=f"action {failure['index']} failed: {failure['message']}",
            )

        # stage naming before committing anything so an error leaves the
        # session untouched (atomic turn)
        staged_graphs = []
        watermark = ctx.name_watermark
        for name in names:
            captured = [p for p in new_grid.parts_in_order() if p.id > watermark]
            if not captured:
                return TurnOutcome.failure(f"there are no new parts to store as {name!r}")
            staged_graphs.append((name, to_graph(captured, name=name)))
            watermark = max(p.id for p in captured)

        ctx.grid = new_grid
        ctx.name_watermark = watermark if names else ctx.name_watermark
        stored = []
        for name, graph in staged_graphs:
            ctx.memory.store(name, graph)
            stored.append(name)
        new_ids = [pid for pid in ctx.grid.parts if pid > before_max]

        if not program.actions and stored:
            return TurnOutcome("stored", stored_names=stored)
        return TurnOutcome(
            "execute",
            program=program,
            log=log,
            actions=program.to_json(),
            stored_names=stored,
            new_part_ids=new_ids,
        )
