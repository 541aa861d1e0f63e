import itertools
import json
import random

import pytest

from coblock.grid import Cell, Color, GridState, OutOfBounds, PartKind, place
from coblock.memory import (
    InvalidOverride,
    MissingBinding,
    PartPlacement,
    ShapeMemory,
    SlotMismatch,
    UnknownShape,
    UnscalableShape,
    WorkflowCall,
    WorkflowMemory,
    abstract_workflow,
    apply_at,
    apply_workflow,
    component_offsets_from_firsts,
    scale_shape,
    shapes_equivalent,
    to_graph,
)

SINGLE_KINDS = [k for k in PartKind if not k.is_bridge]


def pp(kind, color, x, y, z) -> PartPlacement:
    return PartPlacement(kind, color, Cell(x, y, z))


def random_structure(rng: random.Random, max_parts: int = 8, bridges: bool = True):
    """Random gravity-valid structure built by rejection sampling."""
    state = GridState()
    kinds = list(PartKind) if bridges else SINGLE_KINDS
    n_target = rng.randint(1, max_parts)
    attempts = 0
    while len(state.parts) < n_target and attempts < 200:
        attempts += 1
        kind = rng.choice(kinds)
        cell = Cell(rng.randint(2, 14), rng.randint(2, 14), rng.randint(1, 4))
        try:
            state = place(state, kind, rng.choice(list(Color)), cell)
        except Exception:
            continue
    return [PartPlacement(p.kind, p.color, p.anchor) for p in state.parts_in_order()]


def as_multiset(placements):
    return sorted((p.kind.value, p.color.value, tuple(p.anchor)) for p in placements)


def cells_multiset(placements):
    return sorted((c, p.kind.value, p.color.value) for p in placements for c in p.cells)


# --- to_graph ----------------------------------------------------------------


def test_tower_is_single_component_chain():
    tower = [pp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2, 3)]
    g = to_graph(tower)
    assert len(g.components) == 1
    comp = g.components[0]
    dirs = sorted(e.direction for n in comp for e in n.edges)
    assert dirs == ["+z", "+z", "-z", "-z"]


def test_singleton_graph_has_no_edges():
    g = to_graph([pp(PartKind.WASHER, Color.BLUE, 4, 4, 1)])
    assert len(g.components) == 1
    assert g.components[0][0].edges == []


def test_distant_parts_make_two_components():
    g = to_graph([pp(PartKind.NUT, Color.RED, 1, 1, 1), pp(PartKind.NUT, Color.RED, 5, 5, 1)])
    assert len(g.components) == 2
    assert g.firsts_offsets == [(0, 0, 0), (4, 4, 0)]


def test_components_match_flood_fill_oracle():
    rng = random.Random(11)
    for _ in range(50):
        structure = random_structure(rng)
        g = to_graph(structure)
        # oracle: flood fill over the occupied cell set
        owner = {}
        for i, p in enumerate(structure):
            for c in p.cells:
                owner[c] = i
        seen, comps = set(), 0
        for c in owner:
            if c in seen:
                continue
            comps += 1
            stack = [c]
            seen.add(c)
            while stack:
                cur = stack.pop()
                for d in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    nxt = Cell(cur.x + d[0], cur.y + d[1], cur.z + d[2])
                    if nxt in owner and nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
        assert len(g.components) == comps


def test_edge_symmetry_invariant():
    rng = random.Random(13)
    opposite = {"+x": "-x", "-x": "+x", "+y": "-y", "-y": "+y", "+z": "-z", "-z": "+z"}
    for _ in range(30):
        g = to_graph(random_structure(rng))
        for comp in g.components:
            for node in comp:
                for e in node.edges:
                    back = [
                        r for r in comp[e.to].edges
                        if r.to == node.id and r.direction == opposite[e.direction]
                        and r.src_cell == e.dst_cell and r.dst_cell == e.src_cell
                    ]
                    assert back, "missing symmetric edge"


# --- offsets -----------------------------------------------------------------


def test_offsets_single_component():
    assert component_offsets_from_firsts([Cell(3, 3, 1)]) == [(0, 0, 0)]


def test_offsets_subtraction():
    assert component_offsets_from_firsts([Cell(1, 1, 1), Cell(5, 5, 1)]) == [(0, 0, 0), (4, 4, 0)]
    assert component_offsets_from_firsts([Cell(3, 2, 1), Cell(3, 2, 4)]) == [(0, 0, 0), (0, 0, 3)]


# --- apply_at ----------------------------------------------------------------


def test_apply_identity_round_trip():
    rng = random.Random(17)
    for _ in range(100):
        structure = random_structure(rng)
        g = to_graph(structure)
        rebuilt = apply_at(g, structure[0].anchor)
        assert cells_multiset(rebuilt) == cells_multiset(structure)


def test_apply_translated():
    tower = [pp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2, 3)]
    g = to_graph(tower)
    moved = apply_at(g, Cell(9, 8, 1))
    assert as_multiset(moved) == sorted(
        (PartKind.NUT.value, Color.RED.value, (9, 8, z)) for z in (1, 2, 3)
    )


def test_apply_translation_equivariance():
    rng = random.Random(19)
    checked = 0
    while checked < 50:
        structure = random_structure(rng, max_parts=5)
        g = to_graph(structure)
        try:
            base = apply_at(g, Cell(5, 5, 1))
            shifted = apply_at(g, Cell(7, 6, 1))
        except OutOfBounds:
            continue
        expect = sorted(
            (k, c, (x + 2, y + 1, z)) for k, c, (x, y, z) in as_multiset(base)
        )
        assert as_multiset(shifted) == expect
        checked += 1


def test_apply_emission_order_respects_support():
    tower = [pp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2, 3)]
    g = to_graph(tower)
    out = apply_at(g, Cell(4, 4, 1))
    zs = [p.anchor.z for p in out]
    assert zs == sorted(zs)


def test_apply_out_of_bounds():
    tower = [pp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2, 3)]
    g = to_graph(tower)
    with pytest.raises(OutOfBounds):
        apply_at(g, Cell(16, 16, 15))


def test_apply_color_override():
    tower = [pp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2, 3)]
    g = to_graph(tower)
    out = apply_at(g, Cell(1, 2, 1), color_override=Color.GREEN)
    assert {p.color for p in out} == {Color.GREEN}
    assert sorted(tuple(p.anchor) for p in out) == [(1, 2, 1), (1, 2, 2), (1, 2, 3)]


def test_apply_part_override():
    tower = [pp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2, 3)]
    g = to_graph(tower)
    out = apply_at(g, Cell(1, 2, 1), part_override=PartKind.BOLT)
    assert {p.kind for p in out} == {PartKind.BOLT}


def test_apply_part_override_rejected_for_bridges():
    g = to_graph([pp(PartKind.HORIZONTAL_BRIDGE, Color.RED, 3, 3, 1)])
    with pytest.raises(InvalidOverride):
        apply_at(g, Cell(3, 3, 1), part_override=PartKind.NUT)
    g2 = to_graph([pp(PartKind.NUT, Color.RED, 3, 3, 1)])
    with pytest.raises(InvalidOverride):
        apply_at(g2, Cell(3, 3, 1), part_override=PartKind.VERTICAL_BRIDGE)


def test_apply_bridge_structure_round_trip():
    arch = [
        pp(PartKind.SCREW, Color.BLUE, 3, 3, 1),
        pp(PartKind.NUT, Color.RED, 3, 3, 2),
        pp(PartKind.SCREW, Color.BLUE, 5, 3, 1),
        pp(PartKind.NUT, Color.RED, 5, 3, 2),
        pp(PartKind.HORIZONTAL_BRIDGE, Color.GREEN, 4, 3, 3),
    ]
    g = to_graph(arch)
    rebuilt = apply_at(g, Cell(3, 3, 1))
    assert cells_multiset(rebuilt) == cells_multiset(arch)
    moved = apply_at(g, Cell(9, 3, 1))
    assert sorted(tuple(p.anchor) for p in moved) == sorted(
        tuple(Cell(p.anchor.x + 6, p.anchor.y, p.anchor.z)) for p in arch
    )


# --- scaling -----------------------------------------------------------------


def test_scale_identity():
    square = [pp(PartKind.WASHER, Color.BLUE, x, y, 1) for x in (2, 3) for y in (2, 3)]
    lo = Cell(2, 2, 1)
    assert scale_shape(square, (lo, (2, 2, 1))) == square


def test_scale_up_2x2_to_4x4():
    square = [pp(PartKind.WASHER, Color.BLUE, x, y, 1) for x in (2, 3) for y in (2, 3)]
    out = scale_shape(square, (Cell(2, 2, 1), (4, 4, 1)))
    assert len(out) == 16
    # independent oracle over the 4x4 index map
    expected = set()
    for tx in range(4):
        for ty in range(4):
            sx, sy = tx * 2 // 4, ty * 2 // 4
            assert (sx, sy) in {(0, 0), (0, 1), (1, 0), (1, 1)}
            expected.add((2 + tx, 2 + ty, 1))
    assert {tuple(p.anchor) for p in out} == expected


def test_scale_down_row():
    row = [pp(PartKind.NUT, Color.RED, 2 + i, 5, 1) for i in range(4)]
    out = scale_shape(row, (Cell(2, 5, 1), (2, 1, 1)))
    # floor(t*4/2): target 0 -> source 0, target 1 -> source 2
    assert sorted(tuple(p.anchor) for p in out) == [(2, 5, 1), (3, 5, 1)]


def test_scale_index_map_against_oracle_all_sizes():
    for s in range(1, 9):
        row = [pp(PartKind.NUT, Color.RED, 1 + i, 1, 1) for i in range(s)]
        for t in range(1, 9):
            out = scale_shape(row, (Cell(1, 1, 1), (t, 1, 1)))
            got = sorted(p.anchor.x - 1 for p in out)
            oracle = sorted({ti for ti in range(t) if (ti * s // t) in range(s)})
            assert got == oracle
            # every target maps somewhere for a full row, so all t indices appear
            assert got == list(range(t))


def test_scale_up_then_down_identity_on_axis():
    row = [pp(PartKind.NUT, Color.RED, 1 + i, 1, 1) for i in range(4)]
    up = scale_shape(row, (Cell(1, 1, 1), (8, 1, 1)))
    down = scale_shape(up, (Cell(1, 1, 1), (4, 1, 1)))
    assert as_multiset(down) == as_multiset(row)


def test_scale_bridge_pairing():
    bridge = [pp(PartKind.HORIZONTAL_BRIDGE, Color.GREEN, 3, 3, 1)]
    out = scale_shape(bridge, (Cell(3, 3, 1), (4, 1, 1)))
    assert all(p.kind is PartKind.HORIZONTAL_BRIDGE for p in out)
    assert len(out) == 2
    with pytest.raises(UnscalableShape):
        scale_shape(bridge, (Cell(3, 3, 1), (3, 1, 1)))


def test_scale_colors_inherited():
    pair = [pp(PartKind.NUT, Color.RED, 1, 1, 1), pp(PartKind.NUT, Color.BLUE, 2, 1, 1)]
    out = scale_shape(pair, (Cell(1, 1, 1), (4, 1, 1)))
    by_x = {p.anchor.x: p.color for p in out}
    assert by_x == {1: Color.RED, 2: Color.RED, 3: Color.BLUE, 4: Color.BLUE}


# --- equivalence -------------------------------------------------------------


def bijection_oracle(a, b, compare_color=True):
    """Exhaustive search for a relative-coordinates-preserving bijection."""
    if len(a) != len(b):
        return False
    for perm in itertools.permutations(range(len(b))):
        ok = True
        for i in range(len(a)):
            pa, pb = a[i], b[perm[i]]
            if pa.kind != pb.kind or (compare_color and pa.color != pb.color):
                ok = False
                break
            for j in range(len(a)):
                qa, qb = a[j], b[perm[j]]
                da = (qa.anchor.x - pa.anchor.x, qa.anchor.y - pa.anchor.y, qa.anchor.z - pa.anchor.z)
                db = (qb.anchor.x - pb.anchor.x, qb.anchor.y - pb.anchor.y, qb.anchor.z - pb.anchor.z)
                if da != db:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return True
    return False


def test_equivalence_translation_invariance():
    s = [pp(PartKind.NUT, Color.RED, 1, 2, z) for z in (1, 2)]
    t = [pp(PartKind.NUT, Color.RED, 4, 2, z) for z in (1, 2)]
    assert shapes_equivalent(s, t)


def test_equivalence_kind_mismatch():
    s = [pp(PartKind.NUT, Color.RED, 1, 2, 1)]
    t = [pp(PartKind.BOLT, Color.RED, 1, 2, 1)]
    assert not shapes_equivalent(s, t)


def test_equivalence_color_flag():
    s = [pp(PartKind.NUT, Color.RED, 1, 2, 1)]
    t = [pp(PartKind.NUT, Color.BLUE, 1, 2, 1)]
    assert not shapes_equivalent(s, t, compare_color=True)
    assert shapes_equivalent(s, t, compare_color=False)


def test_equivalence_agrees_with_bijection_oracle():
    rng = random.Random(23)
    agree = 0
    for _ in range(300):
        a = random_structure(rng, max_parts=5, bridges=False)
        if rng.random() < 0.5:
            dx, dy = rng.randint(0, 2), rng.randint(0, 2)
            b = [PartPlacement(p.kind, p.color, Cell(p.anchor.x + dx, p.anchor.y + dy, p.anchor.z)) for p in a]
            if rng.random() < 0.4 and b:
                i = rng.randrange(len(b))
                b[i] = PartPlacement(
                    rng.choice(SINGLE_KINDS), b[i].color, b[i].anchor
                )
        else:
            b = random_structure(rng, max_parts=5, bridges=False)
        got = shapes_equivalent(a, b)
        want = bijection_oracle(a, b)
        assert got == want
        agree += 1
    assert agree == 300


def test_equivalence_is_equivalence_relation():
    rng = random.Random(29)
    shapes = [random_structure(rng, max_parts=4) for _ in range(12)]
    for s in shapes:
        assert shapes_equivalent(s, s)
    for s in shapes:
        for t in shapes:
            assert shapes_equivalent(s, t) == shapes_equivalent(t, s)
    for s in shapes:
        for t in shapes:
            for u in shapes:
                if shapes_equivalent(s, t) and shapes_equivalent(t, u):
                    assert shapes_equivalent(s, u)


# --- store -------------------------------------------------------------------


def test_store_retrieve_case_insensitive():
    mem = ShapeMemory()
    g = to_graph([pp(PartKind.NUT, Color.RED, 1, 1, 1)])
    mem.store("C15", g)
    assert mem.retrieve("c15").name == "C15"
    assert "C15" in mem and "c15" in mem


def test_retrieve_unknown_shape():
    with pytest.raises(UnknownShape):
        ShapeMemory().retrieve("nonesuch")


def test_restore_bumps_version():
    mem = ShapeMemory()
    g = to_graph([pp(PartKind.NUT, Color.RED, 1, 1, 1)])
    assert mem.store("S", g).version == 1
    assert mem.store("s", g).version == 2


def test_persistence_round_trip(tmp_path):
    mem = ShapeMemory()
    arch = [
        pp(PartKind.SCREW, Color.BLUE, 3, 3, 1),
        pp(PartKind.NUT, Color.RED, 3, 3, 2),
        pp(PartKind.HORIZONTAL_BRIDGE, Color.GREEN, 3, 3, 3),
    ]
    mem.store("arch", to_graph(arch))
    path = tmp_path / "shapes.json"
    mem.save(path)
    loaded = ShapeMemory.load(path)
    assert loaded.retrieve("ARCH").to_json() == mem.retrieve("arch").to_json()
    data = json.loads(path.read_text())
    assert data["format"] == 1


# --- workflows ---------------------------------------------------------------


def test_abstract_workflow():
    call = WorkflowCall("create_event", ("meeting with Alex", "tomorrow 3pm"))
    t = abstract_workflow(call, ["q", "time"])
    assert t.slot_names == ("q", "time")
    assert dict(t.example_binding) == {"q": "meeting with Alex", "time": "tomorrow 3pm"}


def test_abstract_workflow_slot_mismatch():
    call = WorkflowCall("send_email", ("alex@example.com", "confirmed"))
    with pytest.raises(SlotMismatch):
        abstract_workflow(call, ["q"])


def test_abstract_workflow_needs_two_non_boolean():
    with pytest.raises(ValueError):
        abstract_workflow(WorkflowCall("toggle", ("on", True)), ["q", "flag"])


def test_apply_workflow_substitution():
    t = abstract_workflow(WorkflowCall("create_event", ("a", "b")), ["q", "time"])
    out = apply_workflow(t, {"q": "standup", "time": "Mon 9am"})
    assert out == WorkflowCall("create_event", ("standup", "Mon 9am"))


def test_apply_workflow_example_binding_round_trip():
    call = WorkflowCall("create_event", ("a", "b"))
    t = abstract_workflow(call, ["q", "time"])
    assert apply_workflow(t, dict(t.example_binding)) == call


def test_apply_workflow_missing_binding():
    t = abstract_workflow(WorkflowCall("create_event", ("a", "b")), ["q", "time"])
    with pytest.raises(MissingBinding):
        apply_workflow(t, {"q": "standup"})


def test_workflow_memory_persistence(tmp_path):
    mem = WorkflowMemory()
    t = abstract_workflow(WorkflowCall("create_event", ("a", "b")), ["q", "time"])
    mem.store("create_event", t)
    path = tmp_path / "workflows.json"
    mem.save(path)
    assert WorkflowMemory.load(path).retrieve("CREATE_EVENT") == t


def test_library_files_reject_unknown_format(tmp_path):
    shapes = tmp_path / "shapes.json"
    shapes.write_text(json.dumps({"format": 99, "shapes": {}}))
    with pytest.raises(ValueError):
        ShapeMemory.load(shapes)
    workflows = tmp_path / "workflows.json"
    workflows.write_text(json.dumps({"format": 99, "workflows": {}}))
    with pytest.raises(ValueError):
        WorkflowMemory.load(workflows)
