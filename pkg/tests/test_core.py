"""Domain type and validation behavior."""

from __future__ import annotations

from dataclasses import replace
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rastrodm.core import (
    ActionDefinition,
    CrispPhase,
    CrossValidation,
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
    canonical_task,
    format_timestamp,
    normalize_task_text,
    parse_timestamp,
    validate_training,
)
from rastrodm.errors import ValidationError


class TestCanonicalTask:
    def test_known_task_maps_to_its_phase(self):
        assert canonical_task("Format Data") == TaskRef(
            CrispPhase.DATA_PREPARATION, "format data"
        )

    def test_normalization_collapses_whitespace(self):
        assert canonical_task("format   data").task == "format data"

    def test_unmatched_name_falls_back_to_other(self):
        assert canonical_task("Frobnicate") == TaskRef(CrispPhase.OTHER, "frobnicate")

    def test_empty_after_trim_rejected(self):
        with pytest.raises(ValidationError):
            canonical_task("   ")

    def test_extra_taxonomy_extends_builtin(self):
        extra = {"ocr tuning": CrispPhase.DATA_PREPARATION}
        assert canonical_task("OCR Tuning", extra).phase is CrispPhase.DATA_PREPARATION
        assert canonical_task("OCR Tuning").phase is CrispPhase.OTHER

    @given(st.text(min_size=1).filter(lambda s: s.strip()))
    def test_idempotent_on_any_nonempty_text(self, raw):
        once = canonical_task(raw)
        twice = canonical_task(once.task)
        assert twice == once
        assert normalize_task_text(once.task) == once.task


class TestTimestamps:
    def test_round_trip_second_precision(self):
        ts = datetime(2019, 7, 5, 18, 2, 12, tzinfo=timezone.utc)
        assert parse_timestamp(format_timestamp(ts)) == ts

    def test_naive_input_taken_as_utc(self):
        assert format_timestamp(datetime(2019, 7, 5, 0, 44, 59)) == "2019-07-05T00:44:59Z"

    def test_bad_text_rejected(self):
        with pytest.raises(ValidationError):
            parse_timestamp("yesterday")


class TestRecordConstruction:
    def test_empty_action_description_rejected(self):
        with pytest.raises(ValidationError):
            ActionDefinition(description="   ")

    def test_empty_lesson_description_rejected(self):
        with pytest.raises(ValidationError):
            Lesson(description="")

    def test_metric_result_needs_exactly_one_variant(self):
        with pytest.raises(ValidationError):
            MetricResult()
        with pytest.raises(ValidationError):
            MetricResult(scalar=0.5, samples=(0.5,))

    def test_metric_values_view(self):
        assert MetricResult(scalar=0.911).values == (0.911,)
        assert MetricResult(samples=(0.1, 0.2)).values == (0.1, 0.2)


def _valid_cv_record() -> TrainingRecord:
    return TrainingRecord(
        context=TrainingContext(epochs=33, duration_seconds=460.0),
        training_params=TrainingParams(algorithm="MLP", hyperparameters={"batch_size": 256}),
        test_params=TestParams(
            evaluation_procedure=CrossValidation(partitions=7, repetitions=2),
            metric_names=("accuracy",),
        ),
        results=TrainingResults(metrics={"accuracy": MetricResult(samples=(0.91,) * 14)}),
    )


class TestValidateTraining:
    def test_failed_without_error_message_flagged(self):
        record = TrainingRecord(context=TrainingContext(status=TrainingStatus.FAILED))
        violations = validate_training(record)
        assert [v.path for v in violations] == ["context.error_message"]

    def test_cross_validation_with_matching_samples_valid(self):
        assert validate_training(_valid_cv_record()) == []

    def test_minimal_record_valid(self):
        assert validate_training(TrainingRecord()) == []

    def test_scalar_metric_allowed_under_cross_validation(self):
        record = _valid_cv_record()
        record = replace(
            record,
            results=TrainingResults(metrics={"accuracy": MetricResult(scalar=0.91)}),
        )
        assert validate_training(record) == []

    def test_interrupted_with_message_valid(self):
        record = TrainingRecord(
            context=TrainingContext(
                status=TrainingStatus.INTERRUPTED, error_message="killed"
            )
        )
        assert validate_training(record) == []


def _mutations():
    base = _valid_cv_record()
    yield "status failed, no message", replace(
        base, context=replace(base.context, status=TrainingStatus.FAILED)
    ), "context.error_message"
    yield "negative epochs", replace(
        base, context=replace(base.context, epochs=-1)
    ), "context.epochs"
    yield "negative duration", replace(
        base, context=replace(base.context, duration_seconds=-0.1)
    ), "context.duration_seconds"
    yield "nan duration", replace(
        base, context=replace(base.context, duration_seconds=float("nan"))
    ), "context.duration_seconds"
    yield "nan metric", replace(
        base,
        results=TrainingResults(metrics={"accuracy": MetricResult(scalar=float("nan"))}),
    ), "results.metrics.accuracy"
    yield "wrong cv sample count", replace(
        base,
        results=TrainingResults(metrics={"accuracy": MetricResult(samples=(0.9,) * 13)}),
    ), "results.metrics.accuracy"
    yield "holdout fraction out of range", replace(
        base,
        test_params=TestParams(evaluation_procedure=Holdout(fraction=1.5)),
    ), "test_params.evaluation_procedure.fraction"
    yield "cv partitions too small", replace(
        base,
        test_params=TestParams(evaluation_procedure=CrossValidation(partitions=1)),
        results=TrainingResults(),
    ), "test_params.evaluation_procedure.partitions"
    yield "negative record count", replace(
        base, data_used=replace(base.data_used, record_count=-5)
    ), "data_used.record_count"
    yield "non-scalar hyperparameter", replace(
        base,
        training_params=TrainingParams(algorithm="MLP", hyperparameters={"grid": [1, 2]}),
    ), "training_params.hyperparameters.grid"
    yield "nan hyperparameter", replace(
        base,
        training_params=TrainingParams(
            algorithm="MLP", hyperparameters={"lr": float("inf")}
        ),
    ), "training_params.hyperparameters.lr"


@pytest.mark.parametrize(
    "label,record,path", list(_mutations()), ids=[m[0] for m in _mutations()]
)
def test_each_broken_invariant_yields_a_violation(label, record, path):
    violations = validate_training(record)
    assert any(v.path == path for v in violations), (label, violations)


def test_validation_does_not_mutate():
    record = TrainingRecord(context=TrainingContext(status=TrainingStatus.FAILED))
    before = record
    validate_training(record)
    assert record == before


def test_empty_sample_list_flagged():
    record = TrainingRecord()
    bad = MetricResult(samples=(0.5,))
    object.__setattr__(bad, "samples", ())
    record = replace(record, results=TrainingResults(metrics={"accuracy": bad}))
    assert any(
        v.path == "results.metrics.accuracy" for v in validate_training(record)
    )
