"""Deterministic documents generated from a trail.

All outputs are pure functions of the stored records: the same trail
yields byte-identical markdown and JSON, which keeps them diffable and
golden-file testable. The markdown layout and the export key set are
frozen in docs/format-spec.md.
"""

from __future__ import annotations

import json
from typing import Any

from . import core
from .core import (
    ActionDefinition,
    Configuration,
    CrossValidation,
    DataUsed,
    Holdout,
    Lesson,
    MetricResult,
    TaskRef,
    TestParams,
    TrainingContext,
    TrainingParams,
    TrainingRecord,
    TrainingResults,
    TrainingStatus,
    validate_training,
)
from .errors import ValidationError
from .metrics import summarize
from .store import TrailStore

_KIND_ORDER = {"action": 0, "training": 1, "lesson": 2}


def _ts(record) -> str:
    registered = (
        record.context.registered_at
        if isinstance(record, TrainingRecord)
        else record.registered_at
    )
    return core.format_timestamp(registered) if registered else ""


def _code(record) -> int:
    return record.context.code if isinstance(record, TrainingRecord) else record.code


def _num(value: float) -> str:
    return f"{value:.6g}"


def _training_line(t: TrainingRecord) -> str:
    return (
        f"- {_ts(t)} training [{t.context.code}] "
        f"algorithm={t.training_params.algorithm or '?'} status={t.context.status.value}"
    )


def task_report(store: TrailStore, task: TaskRef | str) -> str:
    """Markdown report of one task's actions, lessons and linked trainings.

    Records match on the canonical task name; an unknown task simply
    yields empty sections. Lessons contribute a training summary through
    their related training codes.
    """
    if isinstance(task, str):
        task = core.canonical_task(task, store.config.taxonomy)
    actions = [
        a for a in store.scan("action") if a.task is not None and a.task.task == task.task
    ]
    lessons = [
        l for l in store.scan("lesson") if l.task is not None and l.task.task == task.task
    ]
    actions.sort(key=lambda a: (_ts(a), a.code))
    lessons.sort(key=lambda l: (_ts(l), l.code))

    referenced = sorted({code for l in lessons for code in l.related_training_codes})
    trainings = {
        t.context.code: t
        for t in store.scan("training")
        if t.context.code in set(referenced)
    }

    lines = [f"# Task report: {task.task}", "", f"Phase: {task.phase.value}", ""]
    lines += ["## Action definitions", ""]
    lines += [f"- {_ts(a)} [{a.code}] {a.description}" for a in actions] or ["(none)"]
    lines += ["", "## Lessons learned", ""]
    lines += [f"- {_ts(l)} [{l.code}] {l.description}" for l in lessons] or ["(none)"]
    lines += ["", "## Training summary", "", f"Trainings referenced: {len(trainings)}"]

    samples: dict[str, list[float]] = {}
    for code in referenced:
        record = trainings.get(code)
        if record is None:
            continue
        for name, metric in record.results.metrics.items():
            samples.setdefault(name, []).extend(metric.values)
    if samples:
        lines.append("")
        for name in sorted(samples):
            s = summarize(samples[name])
            lines.append(
                f"- {name}: n={s.n} mean={_num(s.mean)} std={_num(s.sample_std)} "
                f"min={_num(s.min)} q1={_num(s.q1)} median={_num(s.median)} "
                f"q3={_num(s.q3)} max={_num(s.max)}"
            )
    return "\n".join(lines) + "\n"


def chronology(store: TrailStore) -> str:
    """All three record kinds interleaved by timestamp.

    Ties order action before training before lesson, then by code.
    """
    entries: list[tuple[str, int, int, str]] = []
    for action in store.scan("action"):
        entries.append(
            (_ts(action), _KIND_ORDER["action"], action.code,
             f"- {_ts(action)} action [{action.code}] {action.description}")
        )
    for training in store.scan("training"):
        entries.append(
            (_ts(training), _KIND_ORDER["training"], training.context.code,
             _training_line(training))
        )
    for lesson in store.scan("lesson"):
        entries.append(
            (_ts(lesson), _KIND_ORDER["lesson"], lesson.code,
             f"- {_ts(lesson)} lesson [{lesson.code}] {lesson.description}")
        )
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    lines = ["# Chronology", ""]
    lines += [line for _ts_, _kind, _code_, line in entries] or ["(none)"]
    return "\n".join(lines) + "\n"


# Mapping of every training-record field onto its export destination.
# A None destination would mean "deliberately unmapped"; today every
# field of the six categories has a home.
FIELD_MAP: dict[str, str | None] = {
    "context.code": "Run.code",
    "context.registered_at": "Run.registered_at",
    "context.epochs": "Run.epochs",
    "context.duration_seconds": "Run.duration_seconds",
    "context.status": "Run.status",
    "context.error_message": "Run.error_message",
    "configuration.program_id": "Run.Implementation.program_id",
    "configuration.library_versions": "Run.Implementation.Software",
    "configuration.hardware": "Run.Implementation.hardware",
    "configuration.random_seed": "Run.Implementation.random_seed",
    "data_used.dataset_description": "Run.Dataset.description",
    "data_used.selection_criteria": "Run.Dataset.selection_criteria",
    "data_used.feature_names": "Run.Dataset.Feature",
    "data_used.record_count": "Run.Dataset.record_count",
    "data_used.class_count": "Run.Dataset.class_count",
    "training_params.algorithm": "Run.Algorithm.name",
    "training_params.hyperparameters": "Run.HyperParameterSetting",
    "test_params.evaluation_procedure": "Run.EvaluationProcedure",
    "test_params.metric_names": "Run.EvaluationSpecification.measures",
    "results.metrics": "Run.ModelEvaluation",
    "results.model_ref": "Run.Model.reference",
}


def export_mlschema(record: TrainingRecord) -> dict[str, Any]:
    """Export one training as a document keyed by ML Schema concept names."""
    violations = validate_training(record)
    if violations:
        raise ValidationError(
            "cannot export invalid record: " + "; ".join(str(v) for v in violations)
        )
    ctx = record.context
    run: dict[str, Any] = {
        "code": ctx.code,
        "epochs": ctx.epochs,
        "duration_seconds": ctx.duration_seconds,
        "status": ctx.status.value,
    }
    if ctx.registered_at is not None:
        run["registered_at"] = core.format_timestamp(ctx.registered_at)
    if ctx.error_message is not None:
        run["error_message"] = ctx.error_message

    run["Algorithm"] = {"name": record.training_params.algorithm}
    run["HyperParameterSetting"] = [
        {"name": name, "value": record.training_params.hyperparameters[name]}
        for name in sorted(record.training_params.hyperparameters)
    ]

    implementation: dict[str, Any] = {
        "program_id": record.configuration.program_id,
        "Software": [
            {"name": name, "version": record.configuration.library_versions[name]}
            for name in sorted(record.configuration.library_versions)
        ],
    }
    if record.configuration.hardware is not None:
        implementation["hardware"] = record.configuration.hardware
    if record.configuration.random_seed is not None:
        implementation["random_seed"] = record.configuration.random_seed
    run["Implementation"] = implementation

    dataset: dict[str, Any] = {
        "description": record.data_used.dataset_description,
        "Feature": [{"name": name} for name in record.data_used.feature_names],
    }
    if record.data_used.selection_criteria is not None:
        dataset["selection_criteria"] = record.data_used.selection_criteria
    if record.data_used.record_count is not None:
        dataset["record_count"] = record.data_used.record_count
    if record.data_used.class_count is not None:
        dataset["class_count"] = record.data_used.class_count
    run["Dataset"] = dataset

    proc = record.test_params.evaluation_procedure
    if isinstance(proc, Holdout):
        run["EvaluationProcedure"] = {
            "kind": proc.kind,
            "fraction": proc.fraction,
            "stratified": proc.stratified,
        }
    elif isinstance(proc, CrossValidation):
        run["EvaluationProcedure"] = {
            "kind": proc.kind,
            "partitions": proc.partitions,
            "repetitions": proc.repetitions,
        }
    run["EvaluationSpecification"] = {"measures": list(record.test_params.metric_names)}

    evaluations = []
    for name in sorted(record.results.metrics):
        metric = record.results.metrics[name]
        entry: dict[str, Any] = {"EvaluationMeasure": name}
        if metric.scalar is not None:
            entry["value"] = metric.scalar
        else:
            entry["values"] = list(metric.samples or ())
        evaluations.append(entry)
    run["ModelEvaluation"] = evaluations

    if record.results.model_ref is not None:
        run["Model"] = {"reference": record.results.model_ref}
    return {"Run": run}


def import_mlschema(doc: dict[str, Any]) -> TrainingRecord:
    """Rebuild a training record from its exported document."""
    try:
        run = doc["Run"]
        context = TrainingContext(
            code=run["code"],
            registered_at=(
                core.parse_timestamp(run["registered_at"]) if "registered_at" in run else None
            ),
            epochs=run["epochs"],
            duration_seconds=run["duration_seconds"],
            status=TrainingStatus(run["status"]),
            error_message=run.get("error_message"),
        )
        implementation = run["Implementation"]
        configuration = Configuration(
            program_id=implementation["program_id"],
            library_versions={
                entry["name"]: entry["version"] for entry in implementation["Software"]
            },
            hardware=implementation.get("hardware"),
            random_seed=implementation.get("random_seed"),
        )
        dataset = run["Dataset"]
        data_used = DataUsed(
            dataset_description=dataset["description"],
            selection_criteria=dataset.get("selection_criteria"),
            feature_names=tuple(entry["name"] for entry in dataset["Feature"]),
            record_count=dataset.get("record_count"),
            class_count=dataset.get("class_count"),
        )
        training_params = TrainingParams(
            algorithm=run["Algorithm"]["name"],
            hyperparameters={
                entry["name"]: entry["value"] for entry in run["HyperParameterSetting"]
            },
        )
        proc_doc = run.get("EvaluationProcedure")
        procedure = None
        if proc_doc is not None:
            if proc_doc["kind"] == "holdout":
                procedure = Holdout(
                    fraction=proc_doc["fraction"], stratified=proc_doc["stratified"]
                )
            else:
                procedure = CrossValidation(
                    partitions=proc_doc["partitions"], repetitions=proc_doc["repetitions"]
                )
        test_params = TestParams(
            evaluation_procedure=procedure,
            metric_names=tuple(run["EvaluationSpecification"]["measures"]),
        )
        metrics: dict[str, MetricResult] = {}
        for entry in run["ModelEvaluation"]:
            if "value" in entry:
                metrics[entry["EvaluationMeasure"]] = MetricResult(scalar=entry["value"])
            else:
                metrics[entry["EvaluationMeasure"]] = MetricResult(
                    samples=tuple(entry["values"])
                )
        results = TrainingResults(
            metrics=metrics,
            model_ref=run.get("Model", {}).get("reference"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed export document: {exc}") from None
    return TrainingRecord(
        context=context,
        configuration=configuration,
        data_used=data_used,
        training_params=training_params,
        test_params=test_params,
        results=results,
    )


def mlschema_json(doc: dict[str, Any]) -> str:
    """Canonical JSON text of an export document (sorted keys, 2-space indent)."""
    return json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
