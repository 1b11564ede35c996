"""Append-only, code-keyed persistence for one project trail.

Layout under the project directory:

    project.json     project metadata and configuration
    actions.jsonl    one UTF-8 JSON object per line, per record kind
    trainings.jsonl
    lessons.jsonl
    .lock            advisory writer lock

Every line carries ``schema_version``, ``code`` and ``registered_at``.
Writers serialize through the lock; readers need no lock and skip a
partial trailing line left by a concurrent or crashed writer.
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from . import core
from .core import (
    ActionDefinition,
    ActionStatus,
    Configuration,
    CrispPhase,
    CrossValidation,
    DataUsed,
    Holdout,
    Lesson,
    LessonOrigin,
    MetricResult,
    Scalar,
    TaskRef,
    TestParams,
    TrainingContext,
    TrainingParams,
    TrainingRecord,
    TrainingResults,
    TrainingStatus,
    validate_training,
)
from .errors import (
    CorruptLineError,
    LockTimeoutError,
    RecordNotFoundError,
    SchemaVersionError,
    StoreError,
    ValidationError,
)
from .synthesis import SynthesisSettings

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_TAIL_CHUNK = 64 * 1024


class RecordKind(str, Enum):
    ACTION = "action"
    TRAINING = "training"
    LESSON = "lesson"

    @property
    def filename(self) -> str:
        return {
            RecordKind.ACTION: "actions.jsonl",
            RecordKind.TRAINING: "trainings.jsonl",
            RecordKind.LESSON: "lessons.jsonl",
        }[self]


_KIND_BY_TYPE = {
    ActionDefinition: RecordKind.ACTION,
    TrainingRecord: RecordKind.TRAINING,
    Lesson: RecordKind.LESSON,
}

TrailRecord = ActionDefinition | TrainingRecord | Lesson


# Wire format helpers. Hyperparameter values carry a type tag so text,
# integers, reals and booleans round-trip exactly.

_HP_TAGS = {str: "text", int: "int", float: "real", bool: "bool"}


def _tag_scalar(value: Scalar) -> dict[str, Any]:
    tag = _HP_TAGS.get(type(value))
    if tag is None:
        raise ValidationError(f"hyperparameter value {value!r} is not a scalar")
    return {"type": tag, "value": value}


def _untag_scalar(obj: Any) -> Scalar:
    if not isinstance(obj, dict) or set(obj) != {"type", "value"}:
        raise ValueError(f"bad tagged value {obj!r}")
    tag, value = obj["type"], obj["value"]
    if tag == "text":
        return str(value)
    if tag == "bool":
        return bool(value)
    if tag == "int":
        return int(value)
    if tag == "real":
        return float(value)
    raise ValueError(f"unknown value tag {tag!r}")


def _task_to_dict(task: TaskRef | None) -> dict[str, str] | None:
    if task is None:
        return None
    return {"phase": task.phase.value, "task": task.task}


def _task_from_dict(obj: Any) -> TaskRef | None:
    if obj is None:
        return None
    return TaskRef(phase=CrispPhase(obj["phase"]), task=obj["task"])


def _metric_to_dict(metric: MetricResult) -> dict[str, Any]:
    if metric.scalar is not None:
        return {"scalar": metric.scalar}
    return {"samples": list(metric.samples or ())}


def _metric_from_dict(obj: Any) -> MetricResult:
    if "scalar" in obj:
        return MetricResult(scalar=float(obj["scalar"]))
    return MetricResult(samples=tuple(obj["samples"]))


def _procedure_to_dict(proc: Holdout | CrossValidation | None) -> dict[str, Any] | None:
    if proc is None:
        return None
    if isinstance(proc, Holdout):
        return {"kind": proc.kind, "fraction": proc.fraction, "stratified": proc.stratified}
    return {"kind": proc.kind, "partitions": proc.partitions, "repetitions": proc.repetitions}


def _procedure_from_dict(obj: Any) -> Holdout | CrossValidation | None:
    if obj is None:
        return None
    if obj["kind"] == "holdout":
        return Holdout(fraction=obj["fraction"], stratified=obj["stratified"])
    if obj["kind"] == "cross-validation":
        return CrossValidation(partitions=obj["partitions"], repetitions=obj["repetitions"])
    raise ValueError(f"unknown evaluation procedure {obj['kind']!r}")


def _prune(obj: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in obj.items() if v is not None}


def record_to_dict(record: TrailRecord) -> dict[str, Any]:
    """Serialize a record to its wire dict (code and timestamp hoisted)."""
    head: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "code": _code_of(record),
        "registered_at": core.format_timestamp(_registered_at_of(record)),
    }
    if isinstance(record, ActionDefinition):
        return head | _prune(
            {
                "description": record.description,
                "task": _task_to_dict(record.task),
                "resources": record.resources,
                "status": record.status.value,
            }
        )
    if isinstance(record, Lesson):
        return head | _prune(
            {
                "description": record.description,
                "task": _task_to_dict(record.task),
                "origin": record.origin.value,
                "related_training_codes": list(record.related_training_codes),
            }
        )
    if isinstance(record, TrainingRecord):
        ctx = record.context
        cfg = record.configuration
        data = record.data_used
        params = record.training_params
        test = record.test_params
        res = record.results
        return head | {
            "context": _prune(
                {
                    "epochs": ctx.epochs,
                    "duration_seconds": ctx.duration_seconds,
                    "status": ctx.status.value,
                    "error_message": ctx.error_message,
                }
            ),
            "configuration": _prune(
                {
                    "program_id": cfg.program_id,
                    "library_versions": dict(cfg.library_versions),
                    "hardware": cfg.hardware,
                    "random_seed": cfg.random_seed,
                }
            ),
            "data_used": _prune(
                {
                    "dataset_description": data.dataset_description,
                    "selection_criteria": data.selection_criteria,
                    "feature_names": list(data.feature_names),
                    "record_count": data.record_count,
                    "class_count": data.class_count,
                }
            ),
            "training_params": {
                "algorithm": params.algorithm,
                "hyperparameters": {
                    name: _tag_scalar(value) for name, value in params.hyperparameters.items()
                },
            },
            "test_params": _prune(
                {
                    "evaluation_procedure": _procedure_to_dict(test.evaluation_procedure),
                    "metric_names": list(test.metric_names),
                }
            ),
            "results": _prune(
                {
                    "metrics": {
                        name: _metric_to_dict(metric) for name, metric in res.metrics.items()
                    },
                    "model_ref": res.model_ref,
                }
            ),
        }
    raise ValidationError(f"unknown record type {type(record).__name__}")


def record_from_dict(kind: RecordKind, obj: dict[str, Any]) -> TrailRecord:
    """Parse a wire dict back into a domain record."""
    version = obj.get("schema_version")
    if not isinstance(version, int):
        raise ValueError("missing schema_version")
    if version > SCHEMA_VERSION:
        raise SchemaVersionError(
            f"record schema_version {version} is newer than supported {SCHEMA_VERSION}"
        )
    code = obj["code"]
    registered_at = core.parse_timestamp(obj["registered_at"])
    if kind is RecordKind.ACTION:
        return ActionDefinition(
            description=obj["description"],
            task=_task_from_dict(obj.get("task")),
            resources=obj.get("resources"),
            status=ActionStatus(obj["status"]),
            code=code,
            registered_at=registered_at,
        )
    if kind is RecordKind.LESSON:
        return Lesson(
            description=obj["description"],
            task=_task_from_dict(obj.get("task")),
            origin=LessonOrigin(obj["origin"]),
            related_training_codes=tuple(obj.get("related_training_codes", ())),
            code=code,
            registered_at=registered_at,
        )
    ctx = obj["context"]
    cfg = obj["configuration"]
    data = obj["data_used"]
    params = obj["training_params"]
    test = obj["test_params"]
    res = obj["results"]
    return TrainingRecord(
        context=TrainingContext(
            code=code,
            registered_at=registered_at,
            epochs=ctx["epochs"],
            duration_seconds=ctx["duration_seconds"],
            status=TrainingStatus(ctx["status"]),
            error_message=ctx.get("error_message"),
        ),
        configuration=Configuration(
            program_id=cfg["program_id"],
            library_versions=dict(cfg["library_versions"]),
            hardware=cfg.get("hardware"),
            random_seed=cfg.get("random_seed"),
        ),
        data_used=DataUsed(
            dataset_description=data["dataset_description"],
            selection_criteria=data.get("selection_criteria"),
            feature_names=tuple(data["feature_names"]),
            record_count=data.get("record_count"),
            class_count=data.get("class_count"),
        ),
        training_params=TrainingParams(
            algorithm=params["algorithm"],
            hyperparameters={
                name: _untag_scalar(value) for name, value in params["hyperparameters"].items()
            },
        ),
        test_params=TestParams(
            evaluation_procedure=_procedure_from_dict(test.get("evaluation_procedure")),
            metric_names=tuple(test["metric_names"]),
        ),
        results=TrainingResults(
            metrics={name: _metric_from_dict(m) for name, m in res["metrics"].items()},
            model_ref=res.get("model_ref"),
        ),
    )


def serialize_line(record: TrailRecord) -> str:
    """One record as its canonical JSON line (no trailing newline)."""
    return json.dumps(record_to_dict(record), ensure_ascii=False, allow_nan=False)


def _code_of(record: TrailRecord) -> int:
    if isinstance(record, TrainingRecord):
        return record.context.code
    return record.code


def _registered_at_of(record: TrailRecord):
    if isinstance(record, TrainingRecord):
        return record.context.registered_at
    return record.registered_at


def _with_identity(record: TrailRecord, code: int, registered_at) -> TrailRecord:
    if isinstance(record, TrainingRecord):
        return replace(record, context=replace(record.context, code=code, registered_at=registered_at))
    return replace(record, code=code, registered_at=registered_at)


@dataclass
class ProjectConfig:
    """Per-project settings stored in project.json."""

    taxonomy: dict[str, CrispPhase] = field(default_factory=dict)
    synthesis: SynthesisSettings = field(default_factory=SynthesisSettings)

    def to_dict(self) -> dict[str, Any]:
        return {
            "taxonomy": {name: phase.value for name, phase in self.taxonomy.items()},
            "synthesis": {
                "equality_tolerance": self.synthesis.equality_tolerance,
                "min_delta_points": self.synthesis.min_delta_points,
                "jaccard_threshold": self.synthesis.jaccard_threshold,
            },
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ProjectConfig":
        taxonomy = {
            core.normalize_task_text(name): CrispPhase(phase)
            for name, phase in obj.get("taxonomy", {}).items()
        }
        syn = obj.get("synthesis", {})
        defaults = SynthesisSettings()
        return cls(
            taxonomy=taxonomy,
            synthesis=SynthesisSettings(
                equality_tolerance=syn.get("equality_tolerance", defaults.equality_tolerance),
                min_delta_points=syn.get("min_delta_points", defaults.min_delta_points),
                jaccard_threshold=syn.get("jaccard_threshold", defaults.jaccard_threshold),
            ),
        )


class TrailStore:
    """Append-only store for one project directory.

    The public surface has no update or delete: committed lines are final.
    A handle may move between threads but concurrent use of one handle
    must be externally serialized; distinct handles (including ones in
    other processes) coordinate through the directory lock.
    """

    def __init__(self, root: Path, name: str, created_at: str, config: ProjectConfig,
                 lock_timeout: float = 10.0) -> None:
        self.root = root
        self.name = name
        self.created_at = created_at
        self.config = config
        self.lock_timeout = lock_timeout
        self._last_code: dict[RecordKind, int] = {}
        for kind in RecordKind:
            self._last_code[kind] = self._scan_last_code(kind)

    # -- lifecycle

    @classmethod
    def open_or_init(cls, path: str | os.PathLike, project_name: str | None = None,
                     lock_timeout: float = 10.0) -> "TrailStore":
        """Open an existing trail directory or initialize a fresh one.

        Idempotent: the metadata file is created on first call only and the
        next-code counters are recovered by scanning existing records.
        """
        root = Path(path)
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(f"cannot create trail directory {root}: {exc}") from exc
        if not root.is_dir():
            raise StoreError(f"{root} is not a directory")
        meta_path = root / "project.json"
        if meta_path.exists():
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise StoreError(f"cannot read {meta_path}: {exc}") from exc
            version = meta.get("schema_version")
            if not isinstance(version, int) or version > SCHEMA_VERSION:
                raise SchemaVersionError(
                    f"project schema_version {version!r} is newer than supported {SCHEMA_VERSION}"
                )
            try:
                config = ProjectConfig.from_dict(meta.get("config", {}))
            except (KeyError, ValueError) as exc:
                raise StoreError(f"bad project config in {meta_path}: {exc}") from exc
            return cls(root, meta["name"], meta["created_at"], config, lock_timeout)
        name = project_name or root.resolve().name
        created_at = core.format_timestamp(core.utc_now())
        config = ProjectConfig()
        meta = {
            "schema_version": SCHEMA_VERSION,
            "name": name,
            "created_at": created_at,
            "config": config.to_dict(),
        }
        tmp = meta_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        os.replace(tmp, meta_path)
        return cls(root, name, created_at, config, lock_timeout)

    def path_for(self, kind: RecordKind | str) -> Path:
        return self.root / RecordKind(kind).filename

    # -- writing

    def append(self, record: TrailRecord) -> int:
        """Validate, assign the next code and durably append one line.

        The stored code always overrides whatever the caller put in the
        record; ``registered_at`` defaults to now when absent. Returns the
        assigned code.
        """
        kind = _KIND_BY_TYPE.get(type(record))
        if kind is None:
            raise ValidationError(f"cannot append a {type(record).__name__}")
        self._validate_for_append(kind, record)
        return self._append_line(kind, record)

    def _validate_for_append(self, kind: RecordKind, record: TrailRecord) -> None:
        if kind is RecordKind.TRAINING:
            violations = validate_training(record)  # type: ignore[arg-type]
            if violations:
                raise ValidationError(
                    "training record rejected: " + "; ".join(str(v) for v in violations)
                )
        elif kind is RecordKind.LESSON and record.related_training_codes:  # type: ignore[union-attr]
            known = {t.context.code for t in self.scan(RecordKind.TRAINING)}
            missing = [c for c in record.related_training_codes if c not in known]  # type: ignore[union-attr]
            if missing:
                raise ValidationError(
                    f"lesson references unknown training codes {sorted(missing)}"
                )

    def _append_line(self, kind: RecordKind, record: TrailRecord) -> int:
        """Commit one record under the writer lock. Internal: no validation."""
        path = self.path_for(kind)
        with self._writer_lock():
            with open(path, "a+b") as fh:
                self._repair_tail(fh)
                code = max(self._tail_code(fh), self._last_code[kind]) + 1
                registered_at = _registered_at_of(record) or core.utc_now()
                stored = _with_identity(record, code, registered_at)
                line = serialize_line(stored).encode("utf-8") + b"\n"
                start = fh.tell()
                try:
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
                except OSError as exc:
                    # No partial line may remain after a failed write.
                    fh.truncate(start)
                    raise StoreError(f"write to {path} failed: {exc}") from exc
            self._last_code[kind] = code
            return code

    @contextmanager
    def _writer_lock(self) -> Iterator[None]:
        fd = os.open(self.root / ".lock", os.O_RDWR | os.O_CREAT, 0o644)
        try:
            deadline = time.monotonic() + self.lock_timeout
            while True:
                try:
                    fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
                    break
                except OSError:
                    if time.monotonic() >= deadline:
                        raise LockTimeoutError(
                            f"could not acquire writer lock in {self.root} "
                            f"within {self.lock_timeout}s"
                        ) from None
                    time.sleep(0.002)
            try:
                yield
            finally:
                fcntl.flock(fd, fcntl.LOCK_UN)
        finally:
            os.close(fd)

    @staticmethod
    def _repair_tail(fh) -> None:
        """Drop a torn trailing line left by a crashed writer.

        Only ever removes bytes after the last newline, i.e. bytes that
        never became a committed record.
        """
        size = fh.seek(0, os.SEEK_END)
        if size == 0:
            return
        fh.seek(size - 1)
        if fh.read(1) == b"\n":
            fh.seek(0, os.SEEK_END)
            return
        chunk = min(size, _TAIL_CHUNK)
        fh.seek(size - chunk)
        data = fh.read(chunk)
        cut = data.rfind(b"\n")
        keep = size - chunk + cut + 1 if cut >= 0 else 0
        logger.warning("dropping %d bytes of torn trailing line in %s", size - keep, fh.name)
        fh.truncate(keep)
        fh.seek(0, os.SEEK_END)

    @staticmethod
    def _tail_code(fh) -> int:
        """Code of the last committed line (0 when the file is empty).

        Codes are strictly increasing so the last line carries the max.
        """
        size = fh.seek(0, os.SEEK_END)
        if size == 0:
            return 0
        chunk = min(size, _TAIL_CHUNK)
        fh.seek(size - chunk)
        data = fh.read(chunk)
        lines = data.rstrip(b"\n").split(b"\n")
        last = lines[-1]
        try:
            return int(json.loads(last.decode("utf-8"))["code"])
        except (ValueError, KeyError) as exc:
            raise CorruptLineError(fh.name, -1, f"unparseable trailing line: {exc}") from exc
        finally:
            fh.seek(0, os.SEEK_END)

    # -- reading

    def scan(self, kind: RecordKind | str) -> list[TrailRecord]:
        """All records of one kind, in code order."""
        kind = RecordKind(kind)
        return [
            self._parse(kind, line_no, obj)
            for line_no, obj in self._iter_objects(kind)
        ]

    def read(self, kind: RecordKind | str, code: int) -> TrailRecord:
        """The record with the given code, or RecordNotFoundError."""
        kind = RecordKind(kind)
        for line_no, obj in self._iter_objects(kind):
            found = obj.get("code")
            if found == code:
                return self._parse(kind, line_no, obj)
            if isinstance(found, int) and found > code:
                break
        raise RecordNotFoundError(f"no {kind.value} with code {code}")

    def _parse(self, kind: RecordKind, line_no: int, obj: dict[str, Any]) -> TrailRecord:
        try:
            return record_from_dict(kind, obj)
        except StoreError:
            raise
        except (KeyError, ValueError, TypeError, ValidationError) as exc:
            raise CorruptLineError(str(self.path_for(kind)), line_no, str(exc)) from None

    def _iter_objects(self, kind: RecordKind) -> Iterator[tuple[int, dict[str, Any]]]:
        path = self.path_for(kind)
        if not path.exists():
            return
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise StoreError(f"cannot read {path}: {exc}") from exc
        if not raw:
            return
        complete = raw.endswith(b"\n")
        lines = raw.split(b"\n")
        if lines and lines[-1] == b"":
            lines.pop()
        for idx, line in enumerate(lines):
            line_no = idx + 1
            trailing_partial = not complete and idx == len(lines) - 1
            try:
                obj = json.loads(line.decode("utf-8"))
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                if trailing_partial:
                    logger.warning(
                        "%s:%d: skipping partial trailing line", path, line_no
                    )
                    return
                raise CorruptLineError(str(path), line_no, str(exc)) from None
            version = obj.get("schema_version")
            if not isinstance(version, int):
                raise CorruptLineError(str(path), line_no, "missing schema_version")
            if version > SCHEMA_VERSION:
                raise SchemaVersionError(
                    f"{path}:{line_no}: schema_version {version} is newer "
                    f"than supported {SCHEMA_VERSION}"
                )
            yield line_no, obj

    def _scan_last_code(self, kind: RecordKind) -> int:
        last = 0
        for line_no, obj in self._iter_objects(kind):
            code = obj.get("code")
            if not isinstance(code, int):
                raise CorruptLineError(str(self.path_for(kind)), line_no, "missing code")
            last = max(last, code)
        return last

    def next_code(self, kind: RecordKind | str) -> int:
        """The code the next append of this kind would receive."""
        return self._last_code[RecordKind(kind)] + 1
