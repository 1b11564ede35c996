"""Command-line surface: registration, querying, reporting and synthesis.

Exit codes: 0 success, 1 validation or user error, 2 I/O or corruption.
Registration commands never prompt and print the assigned code on
stdout; warnings go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import capture, query, reporting, synthesis
from .core import (
    ActionDefinition,
    ActionStatus,
    Lesson,
    LessonOrigin,
    TrainingParams,
    canonical_task,
)
from .errors import (
    RastroError,
    RecordNotFoundError,
    StoreError,
    ValidationError,
)
from .store import RecordKind, TrailStore, record_to_dict

EXIT_OK = 0
EXIT_USER = 1
EXIT_IO = 2


def _resolve_dir(args: argparse.Namespace) -> Path:
    if args.dir:
        return Path(args.dir)
    env = os.environ.get(capture.RASTRO_DIR_ENV)
    if env:
        return Path(env)
    return Path.cwd()


def _open_store(args: argparse.Namespace) -> TrailStore:
    root = _resolve_dir(args)
    if not (root / "project.json").exists():
        raise ValidationError(
            f"{root} is not a trail directory (run 'rastro init' first)"
        )
    return TrailStore.open_or_init(root)


def _num(value: float) -> str:
    return f"{value:.6g}"


def _parse_param(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ValidationError(f"bad --param {text!r}, expected name=value")
    name, raw = text.split("=", 1)
    if not name:
        raise ValidationError(f"bad --param {text!r}, empty name")
    if raw.lower() in ("true", "false"):
        return name, raw.lower() == "true"
    for cast in (int, float):
        try:
            return name, cast(raw)
        except ValueError:
            continue
    return name, raw


def _record_line(record) -> str:
    view = query.record_view(record)
    code, ts = view["code"], view["registered_at"] or "?"
    if "description" in view:
        tag = view.get("status") or view.get("origin")
        return f"[{code}] {ts} {tag}: {view['description']}"
    ctx = view["context"]
    return (
        f"[{code}] {ts} {ctx['status']}: "
        f"algorithm={view['training_params']['algorithm'] or '?'} "
        f"duration={_num(ctx['duration_seconds'])}s"
    )


def cmd_init(args: argparse.Namespace) -> int:
    store = TrailStore.open_or_init(_resolve_dir(args), project_name=args.name)
    print(f"trail '{store.name}' at {store.root}")
    return EXIT_OK


def cmd_action_add(args: argparse.Namespace) -> int:
    store = _open_store(args)
    warnings = synthesis.redundancy_warning(store, args.message)
    for w in warnings:
        print(
            f"warning: similar {w.kind} [{w.code}] "
            f"(similarity {w.similarity:.2f}): {w.description}",
            file=sys.stderr,
        )
    if warnings and args.strict:
        print("error: refusing to register under --strict", file=sys.stderr)
        return EXIT_USER
    task = canonical_task(args.task, store.config.taxonomy) if args.task else None
    code = store.append(
        ActionDefinition(
            description=args.message,
            task=task,
            resources=args.resources,
            status=ActionStatus(args.status),
        )
    )
    print(code)
    return EXIT_OK


def cmd_lesson_add(args: argparse.Namespace) -> int:
    store = _open_store(args)
    task = canonical_task(args.task, store.config.taxonomy) if args.task else None
    related: tuple[int, ...] = ()
    if args.related:
        try:
            related = tuple(int(c) for c in args.related.split(",") if c.strip())
        except ValueError:
            raise ValidationError(f"bad --related {args.related!r}, expected codes like 3,7")
    code = store.append(
        Lesson(
            description=args.message,
            task=task,
            origin=LessonOrigin(args.origin),
            related_training_codes=related,
        )
    )
    print(code)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    store = _open_store(args)
    command = list(args.command)
    if command and command[0] == "--":
        command = command[1:]
    if not command:
        raise ValidationError("no command given; use: rastro run -- <command...>")
    params = dict(_parse_param(p) for p in args.param or [])
    code = capture.wrap_command(
        store,
        command,
        training_params=TrainingParams(
            algorithm=args.algorithm or "", hyperparameters=params
        ),
    )
    print(code)
    record = store.read(RecordKind.TRAINING, code)
    return EXIT_OK if record.context.status.value == "succeeded" else EXIT_USER


def cmd_query(args: argparse.Namespace) -> int:
    store = _open_store(args)
    predicate = query.parse_predicate(args.predicate)
    records = query.filter_records(store, RecordKind(args.kind), predicate)
    if args.json:
        print(json.dumps([record_to_dict(r) for r in records], ensure_ascii=False, indent=2))
    else:
        for record in records:
            print(_record_line(record))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    store = _open_store(args)
    result = query.group_stats(store.scan(RecordKind.TRAINING), args.group_by, args.metric)
    if args.json:
        payload = {
            "groups": {
                str(group): vars(s) for group, s in sorted(
                    result.groups.items(), key=lambda kv: str(kv[0])
                )
            },
            "skipped": result.skipped,
        }
        print(json.dumps(payload, ensure_ascii=False, indent=2))
        return EXIT_OK
    for group, s in sorted(result.groups.items(), key=lambda kv: str(kv[0])):
        print(
            f"{group}: n={s.n} mean={_num(s.mean)} std={_num(s.sample_std)} "
            f"min={_num(s.min)} q1={_num(s.q1)} median={_num(s.median)} "
            f"q3={_num(s.q3)} max={_num(s.max)}"
        )
    print(f"skipped: {result.skipped}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    store = _open_store(args)
    if args.chronology:
        sys.stdout.write(reporting.chronology(store))
    else:
        sys.stdout.write(reporting.task_report(store, args.task))
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace) -> int:
    store = _open_store(args)
    settings = store.config.synthesis
    trainings = store.scan(RecordKind.TRAINING)
    kinds = args.kind or []
    if not kinds:
        kinds = ["equal-metrics"]
        if args.varied_key:
            kinds.append("improvement")
        if args.param:
            kinds.append("best-setting")
    candidates: list[synthesis.LessonCandidate] = []
    for kind in kinds:
        if kind == "equal-metrics":
            candidates += synthesis.detect_equal_metrics(
                trainings, tolerance=settings.equality_tolerance
            )
        elif kind == "improvement":
            if not args.varied_key:
                raise ValidationError("--kind improvement requires --varied-key")
            candidates += synthesis.attribute_improvement(
                trainings, args.varied_key, args.metric,
                min_delta_points=settings.min_delta_points,
            )
        elif kind == "best-setting":
            if not args.param:
                raise ValidationError("--kind best-setting requires --param")
            candidate = synthesis.best_setting(trainings, args.param, args.metric)
            if candidate is not None:
                candidates.append(candidate)
    if args.json:
        payload = [
            {
                "kind": c.kind.value,
                "description": c.description,
                "evidence": list(c.evidence),
                "confidence": c.confidence,
            }
            for c in candidates
        ]
        print(json.dumps(payload, ensure_ascii=False, indent=2))
        return EXIT_OK
    for c in candidates:
        evidence = ",".join(str(code) for code in c.evidence)
        print(f"{c.kind.value}: {c.description} (evidence: {evidence}; {c.confidence})")
    if not candidates:
        print("no candidates")
    return EXIT_OK


def cmd_monitor(args: argparse.Namespace) -> int:
    try:
        raw = json.loads(Path(args.series).read_text(encoding="utf-8"))
    except OSError as exc:
        raise StoreError(f"cannot read series file: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"bad series file: {exc}") from None
    series = []
    for entry in raw:
        if isinstance(entry, dict):
            series.append((entry["timestamp"], float(entry["accuracy"])))
        else:
            ts, accuracy = entry
            series.append((ts, float(accuracy)))
    result = synthesis.monitor_performance(series, args.baseline, args.threshold)
    print(result.status.value)
    for ts, accuracy in result.flagged:
        print(f"flagged: {ts} {_num(accuracy)}")
    print(result.message)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    store = _open_store(args)
    record = store.read(RecordKind.TRAINING, args.mlschema)
    sys.stdout.write(reporting.mlschema_json(reporting.export_mlschema(record)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--dir", help="project trail directory (default: $RASTRO_DIR or the cwd)"
    )
    parser = argparse.ArgumentParser(
        prog="rastro", description="Project trail: register, query and mine it."
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("init", parents=[common], help="create or open a trail directory")
    p.add_argument("--name", help="project name (default: directory name)")
    p.set_defaults(fn=cmd_init)

    action = sub.add_parser("action", help="action definitions")
    action_sub = action.add_subparsers(dest="subcmd", required=True)
    p = action_sub.add_parser("add", parents=[common], help="register an action definition")
    p.add_argument("-m", "--message", required=True, help="what the step is or was")
    p.add_argument("--task", help="task tag, e.g. 'Format Data'")
    p.add_argument("--resources", help="people/time notes")
    p.add_argument("--status", choices=[s.value for s in ActionStatus], default="defined")
    p.add_argument("--strict", action="store_true",
                   help="abort instead of committing when similar records exist")
    p.set_defaults(fn=cmd_action_add)

    lesson = sub.add_parser("lesson", help="lessons learned")
    lesson_sub = lesson.add_subparsers(dest="subcmd", required=True)
    p = lesson_sub.add_parser("add", parents=[common], help="register a lesson learned")
    p.add_argument("-m", "--message", required=True)
    p.add_argument("--task")
    p.add_argument("--origin", choices=[o.value for o in LessonOrigin], default="human")
    p.add_argument("--related", help="comma-separated training codes")
    p.set_defaults(fn=cmd_lesson_add)

    p = sub.add_parser("run", parents=[common],
                       help="run a command and register it as a training")
    p.add_argument("--algorithm", help="algorithm name to record")
    p.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="hyperparameter to record (repeatable)")
    p.add_argument("command", nargs=argparse.REMAINDER, help="-- <command...>")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("query", parents=[common], help="filter records by predicate")
    p.add_argument("kind", choices=[k.value for k in RecordKind])
    p.add_argument("predicate", nargs="*",
                   help="atoms: path op [value], ops = != < > ~ ? !?")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("stats", parents=[common],
                       help="summary statistics of a metric per group")
    p.add_argument("--group-by", required=True, metavar="PATH")
    p.add_argument("--metric", required=True, metavar="PATH")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("report", parents=[common], help="generate a trail document")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--task", help="task-grouped report")
    mode.add_argument("--chronology", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("synthesize", parents=[common],
                       help="mine the trail for lesson candidates")
    p.add_argument("--kind", action="append",
                   choices=["equal-metrics", "improvement", "best-setting"])
    p.add_argument("--metric", default="results.accuracy", metavar="PATH")
    p.add_argument("--varied-key", metavar="PATH", help="setting for improvement pairing")
    p.add_argument("--param", metavar="PATH", help="setting for best-setting ranking")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("monitor", parents=[common],
                       help="check an evaluation series against a baseline")
    p.add_argument("--baseline", type=float, required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--series", required=True, help="JSON file of [timestamp, accuracy] pairs")
    p.set_defaults(fn=cmd_monitor)

    p = sub.add_parser("export", parents=[common], help="export one training record")
    p.add_argument("--mlschema", type=int, required=True, metavar="CODE")
    p.set_defaults(fn=cmd_export)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, RecordNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (StoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RastroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
