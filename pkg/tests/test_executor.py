import pytest

from coblock.executor import (
    ActionProgram,
    IncompleteSpec,
    RemoveRequest,
    ResolvedPlacement,
    compile as compile_program,
    run,
)
from coblock.grid import Cell, Color, GridState, PartKind, place, validate


def rp(kind, color, x, y, z):
    prov = {f: "utterance" for f in ("kind", "color", "x", "y", "z")}
    return ResolvedPlacement(kind, color, x, y, z, prov)


def test_compile_single_action_wire_format():
    program = compile_program([rp(PartKind.SCREW, Color.BLUE, 5, 4, 1)])
    assert program.to_json() == [
        {"action": "place", "part": "screw", "color": "blue", "x": 5, "y": 4, "z": 1}
    ]


def test_compile_empty():
    assert compile_program([]).actions == ()


def test_compile_orders_by_height():
    tower = [rp(PartKind.NUT, Color.RED, 1, 2, z) for z in (3, 1, 2)]
    program = compile_program(tower)
    assert [a["z"] for a in program.actions] == [1, 2, 3]
    # oracle: the ordered program survives the grid validator
    state, log = run(program, GridState())
    assert log.ok
    validate(state)


def test_compile_rejects_null_field():
    with pytest.raises(IncompleteSpec):
        compile_program([ResolvedPlacement(PartKind.NUT, None, 1, 1, 1, {})])


def test_compile_rejects_unsourced_field():
    bad = ResolvedPlacement(PartKind.NUT, Color.RED, 1, 1, 1, {"kind": "utterance"})
    with pytest.raises(IncompleteSpec):
        compile_program([bad])


def test_run_valid_tower():
    program = compile_program([rp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2, 3)])
    state, log = run(program, GridState())
    assert log.ok and len(state.parts) == 3


def test_run_failure_returns_original_grid():
    base = place(GridState(), PartKind.NUT, Color.RED, Cell(3, 3, 1))
    snap = base.snapshot_json()
    program = ActionProgram(
        (
            {"action": "place", "part": "nut", "color": "red", "x": 1, "y": 1, "z": 1},
            {"action": "place", "part": "nut", "color": "red", "x": 3, "y": 3, "z": 1},
            {"action": "place", "part": "nut", "color": "red", "x": 2, "y": 1, "z": 1},
        )
    )
    state, log = run(program, base)
    assert state.snapshot_json() == snap
    assert not log.ok
    assert log.failure["index"] == 1
    assert log.failure["error"] == "Occupied"


def test_run_empty_program_is_identity():
    base = place(GridState(), PartKind.NUT, Color.RED, Cell(3, 3, 1))
    state, log = run(ActionProgram(()), base)
    assert state is base and log.ok


def test_run_remove_request_flow():
    program = compile_program(
        [rp(PartKind.NUT, Color.RED, 1, 1, 1), RemoveRequest(1, 1, 1)]
    )
    state, log = run(program, GridState())
    assert log.ok
    assert state.occupancy == {}
