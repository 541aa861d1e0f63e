"""Runs a construction pipeline over the task datasets and scores it.

Scoring is pipeline-agnostic: anything exposing the small handle protocol
(new_session / process_turn / question_target / grid snapshot / initial
parse) can be evaluated, including mocks that replay recorded outputs.
Clarification answers are synthesized from the gold record so the
underspecified tasks run unattended.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .datasets import TaskCase, generate_dataset
from .grammar import ordinal
from .memory import (
    PartPlacement,
    WorkflowCall,
    WorkflowMemory,
    abstract_workflow,
    apply_workflow,
    shapes_equivalent,
)
from .pipeline import Pipeline

MAX_ANSWER_TURNS = 24


class PipelineHandle:
    """Adapter between the session pipeline and the harness protocol."""

    def __init__(self, pipeline: Pipeline | None = None):
        self.pipeline = pipeline or Pipeline()

    def new_session(self):
        return self.pipeline.new_session()

    def process_turn(self, session, text: str):
        return self.pipeline.process_turn(session, text)

    def question_target(self, session):
        state = session.pending
        if state is None or state.current_question_id is None:
            return None
        return state.asked.get(state.current_question_id)

    def initial_specs(self, session) -> list[dict]:
        return session.turn_specs_initial

    def grid_parts(self, session):
        return [
            PartPlacement(p.kind, p.color, p.anchor)
            for p in session.grid.parts_in_order()
        ]

    def grid_cells(self, session) -> dict:
        return {
            tuple(c): (session.grid.parts[i].kind.value, session.grid.parts[i].color.value)
            for c, i in session.grid.occupancy.items()
        }

    def part_ids(self, session) -> set:
        return set(session.grid.parts)


@dataclass
class MetricsReport:
    task: str
    n_cases: int
    metrics: dict = field(default_factory=dict)
    per_shape: dict = field(default_factory=dict)
    per_case: list = field(default_factory=list)
    runtime_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "n_cases": self.n_cases,
            "metrics": self.metrics,
            "per_shape": self.per_shape,
            "runtime_s": round(self.runtime_s, 3),
            "per_case": self.per_case,
        }

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"task-{self.task}.json").write_text(json.dumps(self.to_json(), indent=2))
        with open(out / f"task-{self.task}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for key, value in self.metrics.items():
                writer.writerow([key, "N/A" if value is None else value])
            for shape, value in self.per_shape.items():
                writer.writerow([f"shape:{shape}", value])
        return out

    def summary_lines(self) -> list[str]:
        lines = [f"task {self.task}: {self.n_cases} cases in {self.runtime_s:.2f}s"]
        for key, value in self.metrics.items():
            shown = "N/A" if value is None else (f"{value:.2f}" if isinstance(value, float) else value)
            lines.append(f"  {key}: {shown}")
        for shape, value in self.per_shape.items():
            lines.append(f"  shape {shape}: {value}")
        return lines


def _pct(numerator: int, denominator: int) -> float | None:
    if denominator == 0:
        return None
    return round(100.0 * numerator / denominator, 2)


def _action_cells(action: dict) -> frozenset:
    cells = {(action["x"], action["y"], action["z"])}
    if "x2" in action:
        cells.add((action["x2"], action["y"], action["z"]))
    if "y2" in action:
        cells.add((action["x"], action["y2"], action["z"]))
    return frozenset(cells)


def gold_answer(case: TaskCase, target: tuple[int, str]) -> str | None:
    """Synthesizes a clarification answer from the case's complete specs."""
    slot_idx, fld = target
    complete = case.meta.get("complete", [])
    if fld == "utterance" or slot_idx >= len(complete):
        return None
    value = complete[slot_idx].get(fld)
    if value is None:
        return None
    if fld == "kind":
        return f"a {str(value).replace('-', ' ')}"
    if fld == "color":
        return str(value)
    if fld == "x":
        return f"the {ordinal(value)} column"
    if fld == "y":
        return f"the {ordinal(value)} row"
    return str(value)


def _drive_turn(handle, session, case: TaskCase, text: str):
    """Runs one instruction turn, answering clarifications from gold.
    Returns (final outcome, asked targets)."""
    outcome = handle.process_turn(session, text)
    asked: list[tuple[int, str]] = []
    for _ in range(MAX_ANSWER_TURNS):
        if outcome.kind != "clarify":
            break
        target = handle.question_target(session)
        if target is None:
            break
        asked.append(target)
        answer = gold_answer(case, target)
        if answer is None:
            break
        outcome = handle.process_turn(session, answer)
    return outcome, asked


def _score_parts(case: TaskCase, executed: list[dict]) -> list[dict]:
    """Per-part field correctness against the case's gold actions."""
    gold_actions = case.turns[0]["gold_actions"]
    results = []
    for i, gold in enumerate(gold_actions):
        got = executed[i] if i < len(executed) else None
        results.append(
            {
                "part": bool(got) and got.get("part") == gold["part"],
                "color": bool(got) and got.get("color") == gold["color"],
                "coords": bool(got) and _action_cells(got) == _action_cells(gold),
            }
        )
    return results


def _mean(values: list[float]) -> float:
    return round(sum(values) / len(values), 2) if values else 0.0


def run_eval(task_id: str, handle, dataset: list[TaskCase]) -> MetricsReport:
    start = time.perf_counter()
    if task_id == "i":
        report = _eval_single_part(handle, dataset)
    elif task_id == "ii":
        report = _eval_two_part(handle, dataset)
    elif task_id in ("iii", "v"):
        report = _eval_shapes(task_id, handle, dataset)
    elif task_id in ("iv-single", "iv-two"):
        report = _eval_underspecified(task_id, handle, dataset)
    elif task_id == "toolbench":
        report = _eval_toolbench(dataset)
    else:
        raise ValueError(f"unknown task {task_id!r}")
    report.runtime_s = time.perf_counter() - start
    return report


def _eval_single_part(handle, dataset: list[TaskCase]) -> MetricsReport:
    ok_part = ok_color = ok_coords = 0
    per_case = []
    for case in dataset:
        session = handle.new_session()
        outcome, _ = _drive_turn(handle, session, case, case.text)
        executed = outcome.actions if outcome.kind == "execute" else []
        scores = _score_parts(case, executed)[0]
        ok_part += scores["part"]
        ok_color += scores["color"]
        ok_coords += scores["coords"]
        per_case.append({"case": case.case_id, **scores})
    n = len(dataset)
    part, color, coords = _pct(ok_part, n), _pct(ok_color, n), _pct(ok_coords, n)
    return MetricsReport(
        task="i",
        n_cases=n,
        metrics={
            "part_type": part,
            "part_color": color,
            "coordinates": coords,
            "total": _mean([part, color, coords]),
        },
        per_case=per_case,
    )


def _eval_two_part(handle, dataset: list[TaskCase]) -> MetricsReport:
    counts = {
        "first": {"part": 0, "color": 0, "coords": 0},
        "second": {"part": 0, "color": 0},
    }
    by_category: dict[str, list[bool]] = {"independent": [], "dependent": [], "dep-anchor": []}
    per_case = []
    for case in dataset:
        session = handle.new_session()
        outcome, _ = _drive_turn(handle, session, case, case.text)
        executed = outcome.actions if outcome.kind == "execute" else []
        scores = _score_parts(case, executed)
        first, second = scores[0], scores[1]
        for f in ("part", "color", "coords"):
            counts["first"][f] = counts["first"].get(f, 0) + first[f]
        counts["second"]["part"] += second["part"]
        counts["second"]["color"] += second["color"]
        by_category[case.meta["category"]].append(second["coords"])
        per_case.append({"case": case.case_id, "first": first, "second": second})

    n = len(dataset)
    first_metrics = [
        _pct(counts["first"]["part"], n),
        _pct(counts["first"]["color"], n),
        _pct(counts["first"]["coords"], n),
    ]
    second_metrics = [
        _pct(counts["second"]["part"], n),
        _pct(counts["second"]["color"], n),
    ]
    category_metrics = {}
    for cat, values in by_category.items():
        category_metrics[f"second_coords_{cat}"] = _pct(sum(values), len(values))
        second_metrics.append(category_metrics[f"second_coords_{cat}"])
    total = _mean([_mean(first_metrics), _mean([m for m in second_metrics if m is not None])])
    return MetricsReport(
        task="ii",
        n_cases=n,
        metrics={
            "first_part_type": first_metrics[0],
            "first_part_color": first_metrics[1],
            "first_coordinates": first_metrics[2],
            "second_part_type": second_metrics[0],
            "second_part_color": second_metrics[1],
            **category_metrics,
            "total": total,
        },
        per_case=per_case,
    )


def _eval_shapes(task_id: str, handle, dataset: list[TaskCase]) -> MetricsReport:
    from .grid import GridState, apply_action

    per_shape: dict[str, float] = {}
    reproducibility: dict[str, bool] = {}
    total_correct = total_scored = 0
    per_case = []
    for case in dataset:
        session = handle.new_session()
        gold_grid = GridState()
        name_seen = False
        originals: list[PartPlacement] = []
        recall_ok = True
        correct = scored = 0
        seen_ids: set = set()
        turn_records = []
        for turn in case.turns:
            outcome, _ = _drive_turn(handle, session, case, turn["text"])
            scoreable = "gold_actions" in turn
            for action in turn.get("gold_actions", []):
                gold_grid = apply_action(gold_grid, action)
            turn_ok = outcome.kind in ("execute", "stored")
            if scoreable:
                want = {
                    tuple(c): (gold_grid.parts[i].kind.value, gold_grid.parts[i].color.value)
                    for c, i in gold_grid.occupancy.items()
                }
                turn_ok = turn_ok and handle.grid_cells(session) == want
                scored += 1
                correct += turn_ok
            new_ids = handle.part_ids(session) - seen_ids
            seen_ids |= new_ids
            parts_now = handle.grid_parts(session)
            if "name" in turn:
                name_seen = True
                originals = list(parts_now)
            if turn.get("recall"):
                recalled = parts_now[len(parts_now) - len(new_ids):] if new_ids else []
                ok = bool(recalled) and shapes_equivalent(originals, recalled, compare_color=True)
                recall_ok = recall_ok and ok
            turn_records.append({"text": turn["text"], "ok": turn_ok})
        name = case.meta["name"]
        per_shape[name] = _pct(correct, scored) if scored else None
        if name_seen:
            reproducibility[name] = recall_ok
        total_correct += correct
        total_scored += scored
        per_case.append({"case": case.case_id, "turns": turn_records})

    metrics = {"instruction_following_overall": _pct(total_correct, total_scored)}
    if task_id == "v":
        metrics["shapes_reproduced"] = sum(reproducibility.values())
        metrics["shapes_total"] = len(reproducibility)
        per_shape = {k: ("T" if v else "F") for k, v in reproducibility.items()}
    else:
        for shape, ok in reproducibility.items():
            metrics[f"reproducibility_{shape}"] = "T" if ok else "F"
    return MetricsReport(
        task=task_id,
        n_cases=len(dataset),
        metrics=metrics,
        per_shape=per_shape,
        per_case=per_case,
    )


def hallucination_rate(initial_specs: list[dict], gold_specs: list[dict], omitted: list) -> dict:
    """Per-field-category hallucination counts for one case.

    A gold-null field counts as hallucinated when the pre-clarification
    prediction filled it.  Categories follow the scoring tables: part,
    color, coordinates."""
    category = {"kind": "part", "color": "color", "x": "coordinates", "y": "coordinates"}
    counts = {"part": [0, 0], "color": [0, 0], "coordinates": [0, 0]}
    for slot_idx, fld in omitted:
        cat = category[fld]
        counts[cat][1] += 1
        predicted = initial_specs[slot_idx].get(fld) if slot_idx < len(initial_specs) else None
        if predicted is not None:
            counts[cat][0] += 1
    return counts


def _eval_underspecified(task_id: str, handle, dataset: list[TaskCase]) -> MetricsReport:
    detected = asked_ok = parse_ok = asked_any = 0
    halluc = {"part": [0, 0], "color": [0, 0], "coordinates": [0, 0]}
    per_case = []
    for case in dataset:
        session = handle.new_session()
        outcome, asked = _drive_turn(handle, session, case, case.text)
        initial = handle.initial_specs(session)
        omitted = [tuple(o) for o in case.meta["omitted"]]

        case_detected = all(
            idx < len(initial) and initial[idx].get(fld) is None for idx, fld in omitted
        )
        detected += case_detected

        case_asked = set(omitted).issubset(set(asked))
        asked_ok += case_asked
        if asked:
            asked_any += 1

        executed = outcome.actions if outcome.kind == "execute" else []
        scores = _score_parts(case, executed)
        case_parse = all(s["part"] and s["color"] and s["coords"] for s in scores)
        if asked:
            parse_ok += case_parse

        case_halluc = hallucination_rate(initial, case.gold_specs, omitted)
        for cat in halluc:
            halluc[cat][0] += case_halluc[cat][0]
            halluc[cat][1] += case_halluc[cat][1]

        per_case.append(
            {
                "case": case.case_id,
                "detected": case_detected,
                "asked": case_asked,
                "parse_after_cq": case_parse,
            }
        )

    n = len(dataset)
    metrics = {
        "missing_info_detected": _pct(detected, n),
        "cqs_asked": _pct(asked_ok, n),
        "correct_parse_after_cq": _pct(parse_ok, asked_any),
        "hallucination_part": _rate(halluc["part"]),
        "hallucination_color": _rate(halluc["color"]),
        "hallucination_coordinates": _rate(halluc["coordinates"]),
    }
    return MetricsReport(task=task_id, n_cases=n, metrics=metrics, per_case=per_case)


def _rate(pair: list[int]) -> float | None:
    hallucinated, gold_null = pair
    if gold_null == 0:
        return None
    return round(100.0 * hallucinated / gold_null, 2)


class WorkflowAgent:
    """Abstract-then-apply over API workflows, backed by the template
    memory: learn the worked example, store it, re-apply with new values."""

    def __init__(self):
        self.memory = WorkflowMemory()

    def run_case(self, case: TaskCase) -> WorkflowCall:
        wf = case.meta["workflow"]
        example = WorkflowCall(wf["name"], tuple(wf["example_args"]))
        template = abstract_workflow(example, wf["doc_slots"])
        self.memory.store(wf["name"], template)
        stored = self.memory.retrieve(wf["name"])
        return apply_workflow(stored, case.meta["new_bindings"])


def function_reuse_metrics(predicted: list[WorkflowCall], gold: list[WorkflowCall]) -> dict:
    pred_set = {(c.name, tuple(c.args)) for c in predicted}
    gold_set = {(c.name, tuple(c.args)) for c in gold}
    inter = len(pred_set & gold_set)
    precision = 100.0 * inter / len(pred_set) if pred_set else 0.0
    recall = 100.0 * inter / len(gold_set) if gold_set else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "precision": round(precision, 2),
        "recall": round(recall, 2),
        "f1": round(f1, 2),
    }


def _eval_toolbench(dataset: list[TaskCase]) -> MetricsReport:
    agent = WorkflowAgent()
    predicted, gold = [], []
    per_case = []
    for case in dataset:
        want = WorkflowCall(case.meta["gold_call"]["name"], tuple(case.meta["gold_call"]["args"]))
        gold.append(want)
        try:
            got = agent.run_case(case)
        except Exception as err:  # scored as a failure, not a crash
            per_case.append({"case": case.case_id, "ok": False, "error": str(err)})
            continue
        predicted.append(got)
        per_case.append({"case": case.case_id, "ok": got == want})
    metrics = function_reuse_metrics(predicted, gold)
    return MetricsReport(task="toolbench", n_cases=len(dataset), metrics=metrics, per_case=per_case)


# acceptance thresholds per task for --strict runs (reference-model scores)
STRICT_THRESHOLDS = {
    "i": {"part_type": 100, "part_color": 100, "coordinates": 100},
    "ii": {
        "first_part_type": 100, "first_part_color": 100, "first_coordinates": 100,
        "second_part_type": 100, "second_part_color": 100,
        "second_coords_independent": 100, "second_coords_dependent": 100,
        "second_coords_dep-anchor": 100,
    },
    "iii": {"instruction_following_overall": 78.57},
    "iv-single": {
        "missing_info_detected": 100, "cqs_asked": 100, "correct_parse_after_cq": 100,
    },
    "iv-two": {
        "missing_info_detected": 100, "cqs_asked": 100, "correct_parse_after_cq": 100,
    },
    "v": {"shapes_reproduced": 9},
    "toolbench": {"precision": 100, "recall": 100, "f1": 100},
}

PER_SHAPE_FLOORS_III = {
    "A": 100, "B": 75, "C": 100, "D": 25, "E": 75,
    "G": 100, "X": 100, "Square": 75, "+": 100, "Moroccan Bridge": 57.1,
}


def meets_thresholds(report: MetricsReport) -> tuple[bool, list[str]]:
    failures = []
    for key, floor in STRICT_THRESHOLDS.get(report.task, {}).items():
        value = report.metrics.get(key)
        if value is None or value < floor:
            failures.append(f"{key}={value} below {floor}")
    if report.task in ("iv-single", "iv-two"):
        for key in ("hallucination_part", "hallucination_color", "hallucination_coordinates"):
            value = report.metrics.get(key)
            if value is not None and value > 0:
                failures.append(f"{key}={value} above 0")
    if report.task == "iii":
        for shape, floor in PER_SHAPE_FLOORS_III.items():
            value = report.per_shape.get(shape)
            if value is None or value < floor:
                failures.append(f"shape {shape}={value} below {floor}")
    if report.task == "v":
        for shape, verdict in report.per_shape.items():
            if verdict != "T":
                failures.append(f"shape {shape} not reproduced")
    return (not failures), failures


def evaluate(task_id: str, seed: int = 0, handle=None) -> MetricsReport:
    handle = handle or PipelineHandle()
    dataset = generate_dataset(task_id, seed)
    return run_eval(task_id, handle, dataset)
