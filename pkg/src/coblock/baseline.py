"""Single-prompt chain-of-thought baseline.

One completion per turn against the CoT system prompt; `place()` /
`remove()` call lines in the output are parsed into actions and run
against the board.  Exists so the harness can score prompt-only systems
with the same reports as the agent pipeline; its scores are whatever the
backing model earns.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .backends import AgentPrompt, GatewayError
from .executor import ActionProgram, run as run_program
from .grid import Cell, Color, GridState, PartKind, place_action, remove_action
from .memory import PartPlacement
from .pipeline import TurnOutcome

_CALL_RE = re.compile(r"(place|remove)\s*\(([^)]*)\)", re.IGNORECASE)

_KIND_ALIASES = {k.value.replace("-", " "): k for k in PartKind}
_KIND_ALIASES.update({k.value: k for k in PartKind})
_KIND_ALIASES["hexagonal nut"] = PartKind.HEX_NUT


def parse_action_calls(text: str) -> list[dict]:
    """Extracts wire-format actions from `place(part, color, row, column,
    height)` style lines; unparseable calls are skipped (scored as missing,
    not crashes)."""
    actions = []
    for verb, arg_text in _CALL_RE.findall(text or ""):
        args = [a.strip().strip("'\"") for a in arg_text.split(",")]
        try:
            if verb.lower() == "place":
                kind = _KIND_ALIASES[args[0].lower()]
                color = Color(args[1].lower())
                row, column, height = (int(a) for a in args[2:5])
                actions.append(place_action(kind, color, Cell(column, row, height)))
            else:
                row, column, height = (int(a) for a in args[-3:])
                actions.append(remove_action(Cell(column, row, height)))
        except (KeyError, ValueError, IndexError):
            continue
    return actions


@dataclass
class CoTSession:
    grid: GridState = field(default_factory=GridState)
    messages: list = field(default_factory=list)
    turn_specs_initial: list = field(default_factory=list)


class CoTHandle:
    """Harness handle for the single-LLM baseline."""

    def __init__(self, backend):
        self.backend = backend
        self.prompt = AgentPrompt.for_role("cot")

    def new_session(self) -> CoTSession:
        return CoTSession()

    def process_turn(self, session: CoTSession, text: str) -> TurnOutcome:
        session.messages.append({"role": "user", "content": text})
        try:
            completion = self.backend.complete(self.prompt, session.messages)
        except GatewayError as err:
            return TurnOutcome.failure(str(err))
        session.messages.append({"role": "assistant", "content": completion})

        actions = parse_action_calls(completion)
        if not actions:
            stripped = completion.strip()
            if "?" in stripped:
                return TurnOutcome.clarify(stripped.splitlines()[-1], "cot-question")
            return TurnOutcome.failure("no actions in completion")
        program = ActionProgram(tuple(actions), origin="cot")
        new_grid, log = run_program(program, session.grid)
        if not log.ok:
            return TurnOutcome("error", log=log, error=str(log.failure))
        session.grid = new_grid
        return TurnOutcome("execute", program=program, log=log, actions=program.to_json())

    # the baseline cannot name which field a question targets
    def question_target(self, session: CoTSession):
        return None

    def initial_specs(self, session: CoTSession) -> list[dict]:
        return session.turn_specs_initial

    def grid_parts(self, session: CoTSession):
        return [PartPlacement(p.kind, p.color, p.anchor) for p in session.grid.parts_in_order()]

    def grid_cells(self, session: CoTSession) -> dict:
        return {
            tuple(c): (session.grid.parts[i].kind.value, session.grid.parts[i].color.value)
            for c, i in session.grid.occupancy.items()
        }

    def part_ids(self, session: CoTSession) -> set:
        return set(session.grid.parts)
