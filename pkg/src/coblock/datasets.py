"""Dataset generation for the five board tasks and the workflow fixtures.

Generation is a pure function of (task id, seed): the same inputs yield
byte-identical files.  Shape scripts (complex multi-turn builds) are
authored fixtures shipped with the package; sentence-level datasets are
sampled from the instruction templates.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .grammar import PartialPlacementSpec, generate_instruction, spec_to_dict
from .grid import Color, PartKind

SINGLE_KINDS = [k for k in PartKind if not k.is_bridge]
RELATIVE_LABELS = [
    "top left", "top right", "bottom left", "bottom right", "middle",
    "top middle", "bottom middle", "left middle", "right middle",
]

TASK_IDS = ("i", "ii", "iii", "iv-single", "iv-two", "v", "toolbench")


class FixtureMissing(Exception):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"fixture not found: {path}")


@dataclass
class TaskCase:
    task: str
    case_id: str
    turns: list = field(default_factory=list)  # [{"text":..., "gold_actions":[...], ...}]
    gold_specs: list = field(default_factory=list)  # parse-level gold, explicit nulls
    meta: dict = field(default_factory=dict)

    @property
    def text(self) -> str:
        return " ".join(t["text"] for t in self.turns)

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "text": self.text,
            "gold": self.gold_specs,
            "meta": self.meta,
            "turns": self.turns,
        }


def _spec(rng: random.Random, kind=None, bridge_ok=True) -> PartialPlacementSpec:
    s = PartialPlacementSpec()
    kind = kind or rng.choice(list(PartKind) if bridge_ok else SINGLE_KINDS)
    s.set_field("kind", kind, "utterance")
    s.set_field("color", rng.choice(list(Color)), "utterance")
    if kind is PartKind.HORIZONTAL_BRIDGE:
        s.set_field("x", rng.randint(1, 15), "utterance")
        s.set_field("x2", s.x + 1, "utterance")
        s.set_field("y", rng.randint(1, 16), "utterance")
    elif kind is PartKind.VERTICAL_BRIDGE:
        s.set_field("y", rng.randint(1, 15), "utterance")
        s.set_field("y2", s.y + 1, "utterance")
        s.set_field("x", rng.randint(1, 16), "utterance")
    else:
        s.set_field("x", rng.randint(1, 16), "utterance")
        s.set_field("y", rng.randint(1, 16), "utterance")
    return s


def _place_action(spec: PartialPlacementSpec, z: int = 1) -> dict:
    action = {
        "action": "place",
        "part": spec.kind.value,
        "color": spec.color.value,
        "x": spec.x,
        "y": spec.y,
        "z": z,
    }
    if spec.kind is PartKind.HORIZONTAL_BRIDGE:
        action["x2"] = spec.x + 1
    elif spec.kind is PartKind.VERTICAL_BRIDGE:
        action["y2"] = spec.y + 1
    return action


def _task_i(rng: random.Random) -> list[TaskCase]:
    """20 fully specified single-part sentences: half absolute, half relative."""
    cases = []
    for n in range(10):
        spec = _spec(rng)
        text = generate_instruction(spec, "absolute")
        gold = spec_to_dict(spec)
        cases.append(
            TaskCase(
                task="i",
                case_id=f"i-abs-{n:02d}",
                turns=[{"text": text, "gold_actions": [_place_action(spec)]}],
                gold_specs=[gold],
                meta={"template": "absolute"},
            )
        )
    for n in range(10):
        spec = _spec(rng, kind=rng.choice(SINGLE_KINDS))
        label = rng.choice(RELATIVE_LABELS)
        spec.x = spec.y = None
        spec.relative = label
        text = generate_instruction(spec, "relative")
        from .grammar import resolve_relative

        x, y = resolve_relative(label)
        resolved = spec.copy()
        resolved.set_field("x", x, "derived")
        resolved.set_field("y", y, "derived")
        gold = spec_to_dict(spec)
        cases.append(
            TaskCase(
                task="i",
                case_id=f"i-rel-{n:02d}",
                turns=[{"text": text, "gold_actions": [_place_action(resolved)]}],
                gold_specs=[gold],
                meta={"template": "relative", "label": label},
            )
        )
    return cases


def _distinct_cells(rng: random.Random, n: int, lo: int = 1, hi: int = 16) -> list[tuple[int, int]]:
    cells = set()
    while len(cells) < n:
        cells.add((rng.randint(lo, hi), rng.randint(lo, hi)))
    return sorted(cells)


def _task_ii(rng: random.Random) -> list[TaskCase]:
    """13 two-sentence tuples: 5 independent, 4 stacked, 4 adjacent-to-anchor."""
    cases = []
    categories = ["independent"] * 5 + ["dependent"] * 4 + ["dep-anchor"] * 4
    for n, category in enumerate(categories):
        kind1 = rng.choice(SINGLE_KINDS)
        color1 = rng.choice(list(Color))
        kind2 = rng.choice(SINGLE_KINDS)
        color2 = rng.choice(list(Color))
        (x1, y1), (x2, y2) = _distinct_cells(rng, 2, lo=2, hi=14)

        s1 = PartialPlacementSpec()
        s1.set_field("kind", kind1, "utterance")
        s1.set_field("color", color1, "utterance")
        s1.set_field("x", x1, "utterance")
        s1.set_field("y", y1, "utterance")
        text1 = generate_instruction(s1, "absolute")
        actions = [_place_action(s1)]

        s2 = PartialPlacementSpec()
        s2.set_field("kind", kind2, "utterance")
        s2.set_field("color", color2, "utterance")
        if category == "independent":
            s2.set_field("x", x2, "utterance")
            s2.set_field("y", y2, "utterance")
            text2 = generate_instruction(s2, "absolute")
            actions.append(_place_action(s2))
        elif category == "dependent":
            text2 = f"Put a {color2.value} {kind2.value.replace('-', ' ')} on top."
            from .grammar import AnchorRef, DependentRelation

            s2.relation = DependentRelation("on-top", AnchorRef(text="previous"))
            stacked = PartialPlacementSpec()
            stacked.set_field("kind", kind2, "utterance")
            stacked.set_field("color", color2, "utterance")
            stacked.set_field("x", x1, "derived")
            stacked.set_field("y", y1, "derived")
            actions.append(_place_action(stacked, z=2))
        else:  # dep-anchor: adjacent, explicitly naming the first part
            from .grammar import AnchorRef, DependentRelation

            s2.relation = DependentRelation("next-to", AnchorRef(kind=kind1, color=color1))
            text2 = (
                f"Place a {color2.value} {kind2.value.replace('-', ' ')} next to "
                f"the {color1.value} {kind1.value.replace('-', ' ')}."
            )
            beside = PartialPlacementSpec()
            beside.set_field("kind", kind2, "utterance")
            beside.set_field("color", color2, "utterance")
            beside.set_field("x", x1 + 1, "derived")
            beside.set_field("y", y1, "derived")
            actions.append(_place_action(beside))

        cases.append(
            TaskCase(
                task="ii",
                case_id=f"ii-{category}-{n:02d}",
                turns=[{"text": f"{text1} {text2}", "gold_actions": actions}],
                gold_specs=[spec_to_dict(s1), spec_to_dict(s2)],
                meta={"category": category},
            )
        )
    return cases


_OMISSIONS = ("kind", "color", "x", "y", "xy")
_OMISSION_TEMPLATE = {
    "kind": "absolute_no_kind",
    "color": "absolute_no_color",
    "x": "absolute_no_x",
    "y": "absolute_no_y",
    "xy": "absolute_no_xy",
}


def _underspecified_clause(rng: random.Random, omission: str):
    """Returns (text, gold parse-level spec, complete spec)."""
    complete = _spec(rng, kind=rng.choice(SINGLE_KINDS))
    shown = complete.copy()
    for f in {"kind": ("kind",), "color": ("color",), "x": ("x",), "y": ("y",), "xy": ("x", "y")}[omission]:
        setattr(shown, f, None)
        shown.provenance.pop(f, None)
    text = generate_instruction(shown, _OMISSION_TEMPLATE[omission])
    return text, spec_to_dict(shown), complete


def _task_iv_single(rng: random.Random) -> list[TaskCase]:
    """81 single-part sentences, each missing exactly one piece of
    information; stratified 17/16/16/16/16 over kind/color/x/y/both."""
    counts = {"kind": 17, "color": 16, "x": 16, "y": 16, "xy": 16}
    cases = []
    n = 0
    for omission, count in counts.items():
        for _ in range(count):
            text, gold, complete = _underspecified_clause(rng, omission)
            cases.append(
                TaskCase(
                    task="iv-single",
                    case_id=f"iv1-{omission}-{n:03d}",
                    turns=[{"text": text, "gold_actions": [_place_action(complete)]}],
                    gold_specs=[gold],
                    meta={
                        "omitted": [[0, f] for f in (("x", "y") if omission == "xy" else (omission,))],
                        "complete": [spec_to_dict(complete)],
                    },
                )
            )
            n += 1
    return cases


def _task_iv_two(rng: random.Random) -> list[TaskCase]:
    """202 two-part instructions: the first part fully specified in 40, the
    second in 73, neither in 89."""
    layout = [("full", "under")] * 40 + [("under", "full")] * 73 + [("under", "under")] * 89
    cases = []
    for n, (first, second) in enumerate(layout):
        (x1, y1), (x2, y2) = _distinct_cells(rng, 2, lo=1, hi=16)
        texts, golds, completes, omitted = [], [], [], []
        for idx, (mode, (x, y)) in enumerate(zip((first, second), ((x1, y1), (x2, y2)))):
            if mode == "full":
                spec = _spec(rng, kind=rng.choice(SINGLE_KINDS))
                spec.set_field("x", x, "utterance")
                spec.set_field("y", y, "utterance")
                texts.append(generate_instruction(spec, "absolute"))
                golds.append(spec_to_dict(spec))
                completes.append(spec)
            else:
                omission = rng.choice(_OMISSIONS)
                text, gold, complete = _underspecified_clause(rng, omission)
                complete.set_field("x", x, complete.provenance.get("x", "utterance"))
                complete.set_field("y", y, complete.provenance.get("y", "utterance"))
                shown_fields = ("x", "y") if omission == "xy" else (omission,)
                # regenerate with the shared cell so the clause text matches
                shown = complete.copy()
                for f in shown_fields:
                    setattr(shown, f, None)
                    shown.provenance.pop(f, None)
                text = generate_instruction(shown, _OMISSION_TEMPLATE[omission])
                texts.append(text)
                golds.append(spec_to_dict(shown))
                completes.append(complete)
                omitted.extend([idx, f] for f in shown_fields)

        actions = [_place_action(s) for s in completes]
        cases.append(
            TaskCase(
                task="iv-two",
                case_id=f"iv2-{n:03d}",
                turns=[{"text": " ".join(texts), "gold_actions": actions}],
                gold_specs=golds,
                meta={
                    "layout": [first, second],
                    "omitted": [list(o) for o in omitted],
                    "complete": [spec_to_dict(s) for s in completes],
                },
            )
        )
    return cases


def load_shape_fixtures(task: str) -> list[dict]:
    name = {"iii": "shapes_task3.json", "v": "shapes_task5.json"}[task]
    try:
        payload = resources.files("coblock.fixtures").joinpath(name).read_text()
    except FileNotFoundError:
        raise FixtureMissing(name)
    return json.loads(payload)["shapes"]


def _shape_cases(task: str) -> list[TaskCase]:
    cases = []
    for shape in load_shape_fixtures(task):
        cases.append(
            TaskCase(
                task=task,
                case_id=f"{task}-{shape['name'].lower().replace(' ', '-')}",
                turns=shape["turns"],
                meta={"name": shape["name"], "declared_parts": shape["declared_parts"]},
            )
        )
    return cases


# workflow fixture vocabulary: (function name, slot names, value pool per slot)
_WORKFLOWS = [
    ("create_event", ("q", "time"), (("team sync", "dentist visit", "meeting with Alex", "standup", "quarterly review"), ("tomorrow 3pm", "Mon 9am", "Friday noon", "tonight 8pm", "next Tuesday 10am"))),
    ("send_email", ("q", "message"), (("alex@example.com", "sam@example.com", "team@example.com", "boss@example.com"), ("confirmed", "running late", "see attached", "thanks!", "approved"))),
    ("search_flights", ("origin", "destination", "date"), (("Paris", "Berlin", "Tokyo", "Lisbon"), ("NYC", "Rome", "Oslo", "Madrid"), ("2025-05-01", "2025-06-12", "2025-07-04"))),
    ("book_table", ("restaurant", "party_size", "time"), (("Chez Anna", "Taverna", "Noodle Bar"), ("2", "4", "6"), ("7pm", "8pm", "noon"))),
    ("get_weather", ("city", "day"), (("Paris", "Reykjavik", "Cairo", "Quito"), ("today", "tomorrow", "Saturday"))),
    ("translate_text", ("text", "language"), (("good morning", "where is the station", "two coffees please"), ("French", "Japanese", "Greek"))),
    ("set_reminder", ("task", "when"), (("water plants", "pay rent", "call grandma", "submit report"), ("5pm", "tomorrow morning", "in two hours"))),
    ("play_music", ("artist", "playlist"), (("Mingus", "Bjork", "Fela Kuti"), ("focus", "morning", "party"))),
    ("order_ride", ("pickup", "dropoff"), (("12 Main St", "the office", "airport terminal 2"), ("downtown", "home", "central station"))),
    ("track_package", ("carrier", "tracking_id"), (("FastShip", "BlueCourier"), ("FS123456", "BC998877", "FS777000"))),
]


def _task_toolbench(rng: random.Random) -> list[TaskCase]:
    """100 synthetic API workflows, each with at least two non-boolean slots:
    one worked example plus fresh bindings to re-apply."""
    cases = []
    for n in range(100):
        name, slots, pools = _WORKFLOWS[n % len(_WORKFLOWS)]
        example_args = tuple(rng.choice(pool) for pool in pools)
        new_args = tuple(rng.choice(pool) for pool in pools)
        instruction = f"Use {name} with " + ", ".join(
            f"{slot} = {value!r}" for slot, value in zip(slots, example_args)
        )
        cases.append(
            TaskCase(
                task="toolbench",
                case_id=f"wf-{n:03d}",
                turns=[{"text": instruction}],
                meta={
                    "workflow": {
                        "name": name,
                        "doc_slots": list(slots),
                        "example_args": list(example_args),
                    },
                    "new_bindings": dict(zip(slots, new_args)),
                    "gold_call": {"name": name, "args": list(new_args)},
                },
            )
        )
    return cases


def generate_dataset(task_id: str, seed: int = 0) -> list[TaskCase]:
    if task_id not in TASK_IDS:
        raise ValueError(f"unknown task {task_id!r}; expected one of {TASK_IDS}")
    rng = random.Random(seed)
    if task_id == "i":
        return _task_i(rng)
    if task_id == "ii":
        return _task_ii(rng)
    if task_id == "iii":
        return _shape_cases("iii")
    if task_id == "iv-single":
        return _task_iv_single(rng)
    if task_id == "iv-two":
        return _task_iv_two(rng)
    if task_id == "v":
        return _shape_cases("v")
    return _task_toolbench(rng)


def write_dataset_jsonl(cases: list[TaskCase], path: str | Path) -> None:
    lines = [json.dumps(c.to_json(), separators=(",", ":"), sort_keys=True) for c in cases]
    Path(path).write_text("\n".join(lines) + "\n")
