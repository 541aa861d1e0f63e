"""Command-line interface: run evaluations, serve sessions, build from
scripts, replay recorded dialogues."""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime
from pathlib import Path

from .backends import BackendConfig, make_backend
from .datasets import TASK_IDS, generate_dataset, write_dataset_jsonl
from .harness import PipelineHandle, meets_thresholds, run_eval
from .pipeline import Pipeline


def _backend_config(args) -> BackendConfig:
    if args.backend == "remote":
        return BackendConfig(
            kind="remote",
            endpoint=args.endpoint or os.environ.get("COBLOCK_ENDPOINT", ""),
            model=args.model or os.environ.get("COBLOCK_MODEL", ""),
            timeout=args.timeout,
            api_key=os.environ.get("COBLOCK_API_KEY", ""),
        )
    return BackendConfig()


def cmd_eval(args) -> int:
    tasks = TASK_IDS if args.task == "all" else (args.task,)
    if args.task == "iv":
        tasks = ("iv-single", "iv-two")
    out_dir = Path(args.out) / datetime.now().strftime("%Y%m%d-%H%M%S")
    backend = make_backend(_backend_config(args))
    if args.pipeline == "cot":
        from .baseline import CoTHandle

        handle = CoTHandle(backend)
    else:
        handle = PipelineHandle(Pipeline(backend=backend))
    all_ok = True
    for task in tasks:
        dataset = generate_dataset(task, seed=args.seed)
        if args.dump_dataset:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_dataset_jsonl(dataset, out_dir / f"dataset-{task}.jsonl")
        report = run_eval(task, handle, dataset)
        report.save(out_dir)
        for line in report.summary_lines():
            print(line)
        ok, failures = meets_thresholds(report)
        status = "PASS" if ok else "FAIL"
        print(f"  -> {status}" + (f" ({'; '.join(failures)})" if failures else ""))
        all_ok = all_ok and ok
    print(f"reports written to {out_dir}")
    if args.strict and not all_ok:
        return 1
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, SessionService, create_app

    if args.config:
        config = ServiceConfig.from_file(args.config)
    else:
        config = ServiceConfig(data_dir=Path(args.data), backend=_backend_config(args))
    service = SessionService(config)
    if args.recover:
        recovered = service.recover_sessions()
        print(f"recovered {recovered} session(s) from {config.data_dir}")
    app = create_app(service=service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_build(args) -> int:
    pipeline = Pipeline(backend=make_backend(_backend_config(args)))
    ctx = pipeline.new_session()
    script = Path(args.script).read_text().splitlines()
    for line in script:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        outcome = pipeline.process_turn(ctx, line)
        print(f"> {line}")
        if outcome.kind == "clarify":
            print(f"  ? {outcome.question}")
        elif outcome.kind == "execute":
            print(f"  placed {len(outcome.actions)} action(s)")
        elif outcome.kind == "stored":
            print(f"  stored {', '.join(outcome.stored_names)}")
        else:
            print(f"  error: {outcome.error}")
    print(json.dumps(ctx.grid.snapshot(), indent=2))
    if args.save_shapes:
        ctx.memory.save(args.save_shapes)
        print(f"shape library saved to {args.save_shapes}")
    return 0


def cmd_replay(args) -> int:
    from .service import CorruptLog, SessionService, ServiceConfig

    service = SessionService(ServiceConfig(data_dir=Path(args.data)))
    try:
        result = service.replay_log(args.log)
    except CorruptLog as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(result["snapshot_json"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coblock")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="generate datasets, run a pipeline, score it")
    p_eval.add_argument("--task", default="all",
                        choices=list(TASK_IDS) + ["all", "iv"])
    p_eval.add_argument("--backend", default="deterministic", choices=["deterministic", "remote"])
    p_eval.add_argument("--pipeline", default="agent", choices=["agent", "cot"],
                        help="agent pipeline or the single-prompt baseline")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default="./eval-out")
    p_eval.add_argument("--strict", action="store_true",
                        help="exit nonzero if any acceptance threshold fails")
    p_eval.add_argument("--dump-dataset", action="store_true")
    p_eval.add_argument("--endpoint", default="")
    p_eval.add_argument("--model", default="")
    p_eval.add_argument("--timeout", type=float, default=30.0)
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="run the session service")
    p_serve.add_argument("--port", type=int, default=8008)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--data", default="./data")
    p_serve.add_argument("--config", default="")
    p_serve.add_argument("--recover", action="store_true",
                         help="rebuild sessions from persisted logs")
    p_serve.add_argument("--backend", default="deterministic", choices=["deterministic", "remote"])
    p_serve.add_argument("--endpoint", default="")
    p_serve.add_argument("--model", default="")
    p_serve.add_argument("--timeout", type=float, default=30.0)
    p_serve.set_defaults(func=cmd_serve)

    p_build = sub.add_parser("build", help="run an instruction script against a fresh board")
    p_build.add_argument("--script", required=True)
    p_build.add_argument("--save-shapes", default="")
    p_build.add_argument("--backend", default="deterministic", choices=["deterministic", "remote"])
    p_build.add_argument("--endpoint", default="")
    p_build.add_argument("--model", default="")
    p_build.add_argument("--timeout", type=float, default=30.0)
    p_build.set_defaults(func=cmd_build)

    p_replay = sub.add_parser("replay", help="replay a recorded dialogue log")
    p_replay.add_argument("--log", required=True)
    p_replay.add_argument("--data", default="./data")
    p_replay.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
