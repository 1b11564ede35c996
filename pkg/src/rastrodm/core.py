"""Domain types for the three trail concepts and the task taxonomy.

A trail documents the process behind model construction with three record
kinds: action definitions (planned or executed project steps), training
records (one model-building run each) and lessons learned. Everything in
this module is a plain value type; persistence lives in ``store``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping, Union

from .errors import ValidationError

Scalar = Union[str, int, float, bool]


class CrispPhase(str, Enum):
    """CRISP-DM phase used to situate a task tag."""

    BUSINESS_UNDERSTANDING = "business-understanding"
    DATA_UNDERSTANDING = "data-understanding"
    DATA_PREPARATION = "data-preparation"
    MODELING = "modeling"
    EVALUATION = "evaluation"
    DEPLOYMENT = "deployment"
    OTHER = "other"


class ActionStatus(str, Enum):
    DEFINED = "defined"
    EXECUTED = "executed"
    ABANDONED = "abandoned"


class LessonOrigin(str, Enum):
    HUMAN = "human"
    SYNTHESIZED = "synthesized"


class TrainingStatus(str, Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    INTERRUPTED = "interrupted"


# Built-in task taxonomy: the six phase names plus the specialized task
# names seen in real project trails. Keys are canonical (normalized) text.
BUILTIN_TASKS: dict[str, CrispPhase] = {
    "business understanding": CrispPhase.BUSINESS_UNDERSTANDING,
    "data understanding": CrispPhase.DATA_UNDERSTANDING,
    "data preparation": CrispPhase.DATA_PREPARATION,
    "modeling": CrispPhase.MODELING,
    "evaluation": CrispPhase.EVALUATION,
    "deployment": CrispPhase.DEPLOYMENT,
    "select data": CrispPhase.DATA_PREPARATION,
    "format data": CrispPhase.DATA_PREPARATION,
    "select technique": CrispPhase.MODELING,
    "construct model": CrispPhase.MODELING,
    "project of tests": CrispPhase.MODELING,
}

_WS = re.compile(r"\s+")


def normalize_task_text(raw: str) -> str:
    """Trim, case-fold and collapse internal whitespace."""
    return _WS.sub(" ", raw.strip().casefold())


@dataclass(frozen=True)
class TaskRef:
    """A normalized task tag placed on actions and lessons."""

    phase: CrispPhase
    task: str


def canonical_task(raw: str, extra: Mapping[str, CrispPhase] | None = None) -> TaskRef:
    """Map free task text onto the taxonomy.

    Unknown names fall back to phase ``other`` with the normalized text
    preserved; ``extra`` lets a project extend the built-in table.

    Raises:
        ValidationError: if ``raw`` is empty after trimming.
    """
    name = normalize_task_text(raw)
    if not name:
        raise ValidationError("task name is empty after trimming")
    phase = BUILTIN_TASKS.get(name)
    if phase is None and extra:
        phase = extra.get(name)
    return TaskRef(phase=phase if phase is not None else CrispPhase.OTHER, task=name)


def utc_now() -> datetime:
    """Current UTC time truncated to second precision."""
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    """Render a timestamp as ISO-8601 UTC with a Z suffix."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValidationError(f"bad timestamp {text!r}: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class ActionDefinition:
    """A declared project step, whether executed or not."""

    description: str
    task: TaskRef | None = None
    resources: str | None = None
    status: ActionStatus = ActionStatus.DEFINED
    code: int = 0
    registered_at: datetime | None = None

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValidationError("action description must be non-empty")


@dataclass(frozen=True)
class Lesson:
    """A lesson learned, human-registered or synthesized from the trail."""

    description: str
    task: TaskRef | None = None
    origin: LessonOrigin = LessonOrigin.HUMAN
    related_training_codes: tuple[int, ...] = ()
    code: int = 0
    registered_at: datetime | None = None

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValidationError("lesson description must be non-empty")


@dataclass(frozen=True)
class MetricResult:
    """One metric outcome: a scalar or a list of per-fold samples."""

    scalar: float | None = None
    samples: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if (self.scalar is None) == (self.samples is None):
            raise ValidationError("metric result needs exactly one of scalar or samples")
        if self.samples is not None:
            object.__setattr__(self, "samples", tuple(float(v) for v in self.samples))

    @property
    def values(self) -> tuple[float, ...]:
        if self.scalar is not None:
            return (float(self.scalar),)
        return self.samples or ()

    def mean(self) -> float:
        vals = self.values
        return sum(vals) / len(vals) if vals else math.nan


# The six attribute categories of a training record.


@dataclass(frozen=True)
class TrainingContext:
    code: int = 0
    registered_at: datetime | None = None
    epochs: int = 0
    duration_seconds: float = 0.0
    status: TrainingStatus = TrainingStatus.SUCCEEDED
    error_message: str | None = None


@dataclass(frozen=True)
class Configuration:
    program_id: str = ""
    library_versions: Mapping[str, str] = field(default_factory=dict)
    hardware: str | None = None
    random_seed: int | None = None


@dataclass(frozen=True)
class DataUsed:
    dataset_description: str = ""
    selection_criteria: str | None = None
    feature_names: tuple[str, ...] = ()
    record_count: int | None = None
    class_count: int | None = None


@dataclass(frozen=True)
class TrainingParams:
    algorithm: str = ""
    hyperparameters: Mapping[str, Scalar] = field(default_factory=dict)


@dataclass(frozen=True)
class Holdout:
    """Single split evaluation: a held-out fraction, optionally stratified."""

    fraction: float
    stratified: bool = False

    kind = "holdout"


@dataclass(frozen=True)
class CrossValidation:
    """k-fold cross-validation, possibly repeated."""

    partitions: int
    repetitions: int = 1

    kind = "cross-validation"

    @property
    def sample_count(self) -> int:
        return self.partitions * self.repetitions


EvaluationProcedure = Union[Holdout, CrossValidation]


@dataclass(frozen=True)
class TestParams:
    __test__ = False  # keep pytest from collecting this as a test class

    evaluation_procedure: EvaluationProcedure | None = None
    metric_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrainingResults:
    metrics: Mapping[str, MetricResult] = field(default_factory=dict)
    model_ref: str | None = None


@dataclass(frozen=True)
class TrainingRecord:
    """One model-building run, grouped into six attribute categories.

    Invalid states are representable on purpose: a crashed or misbehaving
    run must still be expressible so the trail never loses it. Use
    ``validate_training`` to obtain the violations.
    """

    context: TrainingContext = field(default_factory=TrainingContext)
    configuration: Configuration = field(default_factory=Configuration)
    data_used: DataUsed = field(default_factory=DataUsed)
    training_params: TrainingParams = field(default_factory=TrainingParams)
    test_params: TestParams = field(default_factory=TestParams)
    results: TrainingResults = field(default_factory=TrainingResults)


@dataclass(frozen=True)
class Violation:
    """One violated invariant, located by dotted field path."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _finite(value: float) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def validate_training(record: TrainingRecord) -> list[Violation]:
    """Check every invariant of a training record.

    Returns one entry per violated invariant (empty means valid); never
    raises and never mutates the record.
    """
    out: list[Violation] = []
    ctx = record.context

    if not isinstance(ctx.epochs, int) or isinstance(ctx.epochs, bool) or ctx.epochs < 0:
        out.append(Violation("context.epochs", "must be a non-negative integer"))
    if not _finite(ctx.duration_seconds) or ctx.duration_seconds < 0:
        out.append(Violation("context.duration_seconds", "must be a non-negative finite number"))
    if ctx.status in (TrainingStatus.FAILED, TrainingStatus.INTERRUPTED):
        if not (ctx.error_message or "").strip():
            out.append(
                Violation(
                    "context.error_message",
                    f"required when status is {ctx.status.value}",
                )
            )

    if record.configuration.random_seed is not None and (
        not isinstance(record.configuration.random_seed, int)
        or isinstance(record.configuration.random_seed, bool)
    ):
        out.append(Violation("configuration.random_seed", "must be an integer"))

    data = record.data_used
    for name in ("record_count", "class_count"):
        value = getattr(data, name)
        if value is not None and (not isinstance(value, int) or isinstance(value, bool) or value < 0):
            out.append(Violation(f"data_used.{name}", "must be a non-negative integer"))

    for name, value in record.training_params.hyperparameters.items():
        if not isinstance(value, (str, int, float, bool)):
            out.append(
                Violation(
                    f"training_params.hyperparameters.{name}",
                    "must be text, integer, real or boolean",
                )
            )
        elif isinstance(value, float) and not math.isfinite(value):
            out.append(
                Violation(f"training_params.hyperparameters.{name}", "must be finite")
            )

    proc = record.test_params.evaluation_procedure
    if isinstance(proc, Holdout):
        if not _finite(proc.fraction) or not 0.0 < proc.fraction < 1.0:
            out.append(
                Violation(
                    "test_params.evaluation_procedure.fraction",
                    "must lie strictly between 0 and 1",
                )
            )
    elif isinstance(proc, CrossValidation):
        if not isinstance(proc.partitions, int) or proc.partitions < 2:
            out.append(
                Violation("test_params.evaluation_procedure.partitions", "must be at least 2")
            )
        if not isinstance(proc.repetitions, int) or proc.repetitions < 1:
            out.append(
                Violation("test_params.evaluation_procedure.repetitions", "must be at least 1")
            )

    for name, metric in record.results.metrics.items():
        path = f"results.metrics.{name}"
        if metric.samples is not None and len(metric.samples) == 0:
            out.append(Violation(path, "sample list must be non-empty"))
            continue
        for value in metric.values:
            if not _finite(value):
                out.append(Violation(path, "metric values must be finite numbers"))
                break
        if (
            isinstance(proc, CrossValidation)
            and metric.samples is not None
            and len(metric.samples) != proc.sample_count
        ):
            out.append(
                Violation(
                    path,
                    f"expected {proc.sample_count} samples under "
                    f"cross-validation({proc.partitions}, {proc.repetitions}), "
                    f"got {len(metric.samples)}",
                )
            )

    return out
