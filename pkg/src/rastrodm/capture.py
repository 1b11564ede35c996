"""Run-lifecycle capture: make training registration automatic.

A RunContext accumulates one training record while the run executes and
commits it as a single trail line at the end, so a failed run still
carries its error. ``wrap_command`` does the same around an external
process for out-of-process training scripts.
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field, replace

from .core import (
    Configuration,
    DataUsed,
    MetricResult,
    TestParams,
    TrainingContext,
    TrainingParams,
    TrainingRecord,
    TrainingResults,
    TrainingStatus,
    Violation,
    validate_training,
)
from .errors import ClosedRunError, RunValidationError, ValidationError
from .store import TrailStore

STDERR_TAIL_BYTES = 4096

RASTRO_DIR_ENV = "RASTRO_DIR"


def resolve_store(store: TrailStore | None) -> TrailStore:
    """The given store, or the one selected by the RASTRO_DIR variable."""
    if store is not None:
        return store
    path = os.environ.get(RASTRO_DIR_ENV)
    if not path:
        raise ValidationError(
            f"no store given and {RASTRO_DIR_ENV} is not set"
        )
    return TrailStore.open_or_init(path)


@dataclass
class RunContext:
    """One in-flight training run; single-threaded by contract."""

    store: TrailStore
    configuration: Configuration
    data_used: DataUsed
    training_params: TrainingParams
    test_params: TestParams
    epochs: int = 0
    _samples: dict[str, list[float]] = field(default_factory=dict)
    _started_monotonic: float = field(default_factory=time.monotonic)
    _closed: bool = False

    def _check_open(self) -> None:
        if self._closed:
            raise ClosedRunError("run context is already committed")

    def log_metric(self, name: str, value: float) -> None:
        """Append one sample to the named metric's sample list."""
        self._check_open()
        value = float(value)
        if not math.isfinite(value):
            raise ValidationError(f"metric {name!r} got non-finite value {value!r}")
        self._samples.setdefault(name, []).append(value)

    def log_epoch(self) -> int:
        """Count one finished training period; returns the new total."""
        self._check_open()
        self.epochs += 1
        return self.epochs

    def end_run(
        self,
        status: TrainingStatus | str = TrainingStatus.SUCCEEDED,
        final_metrics: dict[str, float | MetricResult] | None = None,
        model_ref: str | None = None,
        error_message: str | None = None,
    ) -> int:
        """Close the context and commit exactly one training line.

        Raises RunValidationError when the finished record breaks an
        invariant: the run is still persisted, with status interrupted and
        the violations written into its error message, and the assigned
        code travels on the exception.
        """
        self._check_open()
        duration = max(0.0, time.monotonic() - self._started_monotonic)
        metrics: dict[str, MetricResult] = {
            name: MetricResult(samples=tuple(samples))
            for name, samples in self._samples.items()
        }
        for name, value in (final_metrics or {}).items():
            metrics[name] = value if isinstance(value, MetricResult) else MetricResult(scalar=float(value))
        record = TrainingRecord(
            context=TrainingContext(
                epochs=self.epochs,
                duration_seconds=duration,
                status=TrainingStatus(status),
                error_message=error_message,
            ),
            configuration=self.configuration,
            data_used=self.data_used,
            training_params=self.training_params,
            test_params=self.test_params,
            results=TrainingResults(metrics=metrics, model_ref=model_ref),
        )
        violations = validate_training(record)
        self._closed = True
        if not violations:
            return self.store.append(record)
        code = self.store._append_line("training", _quarantine(record, violations))
        raise RunValidationError(code, violations)


def _storable_scalar(value) -> bool:
    if isinstance(value, float):
        return math.isfinite(value)
    return isinstance(value, (str, int, bool))


def _quarantine(record: TrainingRecord, violations: list[Violation]) -> TrainingRecord:
    """Mark an invalid finished run interrupted, documenting what was wrong.

    Metric entries and hyperparameter values that cannot be stored as-is
    are dropped or stringified; every such repair is already named in the
    violation list embedded into the error message, so nothing vanishes
    silently.
    """
    detail = "; ".join(str(v) for v in violations)
    prefix = f"{record.context.error_message}; " if record.context.error_message else ""
    bad_metrics = {
        v.path.split(".", 2)[2]
        for v in violations
        if v.path.startswith("results.metrics.")
    }
    metrics = {
        name: metric
        for name, metric in record.results.metrics.items()
        if name not in bad_metrics
    }
    hyper = {
        name: value if _storable_scalar(value) else str(value)
        for name, value in record.training_params.hyperparameters.items()
    }
    return replace(
        record,
        context=replace(
            record.context,
            status=TrainingStatus.INTERRUPTED,
            error_message=f"{prefix}validation failed: {detail}",
        ),
        training_params=replace(record.training_params, hyperparameters=hyper),
        results=replace(record.results, metrics=metrics),
    )


def begin_run(
    store: TrailStore | None = None,
    configuration: Configuration | None = None,
    data_used: DataUsed | None = None,
    training_params: TrainingParams | None = None,
    test_params: TestParams | None = None,
) -> RunContext:
    """Open a run context; nothing is persisted until end_run."""
    return RunContext(
        store=resolve_store(store),
        configuration=configuration or Configuration(),
        data_used=data_used or DataUsed(),
        training_params=training_params or TrainingParams(),
        test_params=test_params or TestParams(),
    )


def wrap_command(
    store: TrailStore | None,
    command: list[str],
    configuration: Configuration | None = None,
    data_used: DataUsed | None = None,
    training_params: TrainingParams | None = None,
    test_params: TestParams | None = None,
    echo_stderr: bool = True,
) -> int:
    """Run an external command and register it as one training.

    Nonzero exit becomes status failed with the last 4 KiB of standard
    error as the error message; a spawn failure is itself registered as a
    failed training. Returns the committed training code.
    """
    resolved = resolve_store(store)
    if not command:
        raise ValidationError("empty command line")
    program_id = shlex.join(command)
    config = replace(configuration or Configuration(), program_id=program_id)
    started = time.monotonic()
    tail = b""
    try:
        proc = subprocess.Popen(command, stderr=subprocess.PIPE)
        assert proc.stderr is not None
        while True:
            chunk = proc.stderr.read(STDERR_TAIL_BYTES)
            if not chunk:
                break
            tail = (tail + chunk)[-STDERR_TAIL_BYTES:]
            if echo_stderr:
                sys.stderr.buffer.write(chunk)
                sys.stderr.buffer.flush()
        exit_status = proc.wait()
    except OSError as exc:
        record = TrainingRecord(
            context=TrainingContext(
                duration_seconds=max(0.0, time.monotonic() - started),
                status=TrainingStatus.FAILED,
                error_message=f"spawn failed: {exc}",
            ),
            configuration=config,
            data_used=data_used or DataUsed(),
            training_params=training_params or TrainingParams(),
            test_params=test_params or TestParams(),
        )
        return resolved.append(record)
    duration = max(0.0, time.monotonic() - started)
    if exit_status == 0:
        status, error_message = TrainingStatus.SUCCEEDED, None
    else:
        status = TrainingStatus.FAILED
        text = tail.decode("utf-8", errors="replace").strip()
        error_message = f"exit status {exit_status}" + (f": {text}" if text else "")
    record = TrainingRecord(
        context=TrainingContext(
            duration_seconds=duration,
            status=status,
            error_message=error_message,
        ),
        configuration=config,
        data_used=data_used or DataUsed(),
        training_params=training_params or TrainingParams(),
        test_params=test_params or TestParams(),
    )
    return resolved.append(record)
