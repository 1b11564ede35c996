"""Shared fixtures: a project-trail builder shaped like a real text
classification project (six actions, seven lessons, two trainings)."""

from __future__ import annotations

import math

import pytest

from rastrodm.core import (
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
    canonical_task,
    parse_timestamp,
)
from rastrodm.store import TrailStore


def pm_samples(mean: float, std: float, n: int = 14) -> tuple[float, ...]:
    """Symmetric sample set with an exact mean and sample (n-1) std."""
    assert n % 2 == 0
    d = std * math.sqrt((n - 1) / n)
    return tuple([mean - d] * (n // 2) + [mean + d] * (n // 2))


CLASSIFIER_ACTIONS = [
    ("2019-03-12T17:04:00Z",
     "Creating a structure (code and data) for processing k-fold in shallow algorithms",
     "Project of tests"),
    ("2019-03-14T19:27:00Z",
     "Initiated the executions to experiment optimizers (MLP): nadam, adadelta",
     "Construct Model"),
    ("2019-03-18T11:40:00Z",
     "Experimenting with MLP columns no longer binary",
     "Format Data"),
    ("2019-03-26T11:57:00Z",
     "Initiating the inclusion of names of files in the model",
     "Select Data"),
    ("2019-05-29T19:30:00Z",
     "Program modified (shallow) to also record recall and f1-micro",
     "Project of tests"),
    ("2019-06-04T19:35:00Z",
     "Program modified (shallow) to not record recall and f1-micro, "
     "because they are equivalent to accuracy (and to precision)",
     "Project of tests"),
]

CLASSIFIER_LESSONS = [
    ("2019-02-27T10:32:00Z",
     "The variables of context and PDF quality are enough to achieve a result of "
     "44% accuracy, with optimizer Adam. With Adagrad:42%; SGD:28%.",
     "Select Data"),
    ("2019-02-27T10:39:00Z",
     "By using pca (sklearn): it is best to separate the fit command from the "
     "transform command. The fit_transform command was locking!",
     "Format Data"),
    ("2019-02-27T10:53:00Z",
     "By using pca (sklearn): if the number of dimensions is very small and the "
     "array is wide (see details in the documentation of function), it is better "
     "to use the randomized method rather than the full method, because it is "
     "faster and the results (variance achieved) are equivalent.",
     "Format Data"),
    ("2019-03-29T09:54:00Z",
     "An improvement of approximately 5% in the accuracy of the models was "
     "noticed after including the file name as an attribute.",
     "Select Data"),
    ("2019-04-01T15:36:00Z",
     "For shallow algorithms, the extra columns with no dummy values (one only "
     "column with various discrete values) led to a better result. For a Neural "
     "Networks, there is a slight improvement using dummy values.",
     "Format Data"),
    ("2019-04-10T10:49:00Z",
     "In multiclass classification, the metrics referring to f1_micro, "
     "recall_micro, precision_micro and accuracy are equivalent.",
     "Project of tests"),
    ("2019-05-22T20:04:00Z",
     "The Adam optimizer (passing object with Amsgrad=False) was the best "
     "optimizer so far. Better than the Amsgrad=True in 0.1%, and than the "
     "Rmsprop and the Adadelta in 0.2% in the context evaluated in the last "
     "executions.",
     "Construct Model"),
]

_CLASSIFIER_HYPERPARAMS = {
    "text_vectorizer": "Tfidf",
    "content_bag_words": 24576,
    "filename_bag_words": 1000,
    "preprocess_method": 7,
    "optimizer": "Adam",
    "batch_size": 256,
    "min_documents_per_type": 0,
    "content_vector_dim": 768,
    "dim_reduction": "TruncatedSVD",
    "shuffle_each_epoch": False,
}

_SELECTION = "Documents of a different type from Others and created after 5/1/2018"


def classifier_test_training() -> TrainingRecord:
    """Cross-validated evaluation run: accuracy 91.1% +- 0.3% over 14 folds."""
    return TrainingRecord(
        context=TrainingContext(
            registered_at=parse_timestamp("2019-07-05T00:44:59Z"),
            epochs=33,
            duration_seconds=460.0,
            status=TrainingStatus.SUCCEEDED,
        ),
        configuration=Configuration(program_id="classifier_monitoring.ipynb"),
        data_used=DataUsed(
            dataset_description="PDF documents converted by OCR",
            selection_criteria=_SELECTION,
            record_count=63468,
            class_count=81,
        ),
        training_params=TrainingParams(
            algorithm="MLP", hyperparameters=dict(_CLASSIFIER_HYPERPARAMS)
        ),
        test_params=TestParams(
            evaluation_procedure=CrossValidation(partitions=7, repetitions=2),
            metric_names=("accuracy",),
        ),
        results=TrainingResults(
            metrics={
                "accuracy": MetricResult(samples=pm_samples(0.911, 0.003)),
                "accuracy_training": MetricResult(samples=pm_samples(0.964, 0.007)),
                "accuracy_validation": MetricResult(samples=pm_samples(0.908, 0.006)),
            },
        ),
    )


def classifier_generation_training() -> TrainingRecord:
    """Final model-generation run: all data used, validation accuracy 92.1%."""
    return TrainingRecord(
        context=TrainingContext(
            registered_at=parse_timestamp("2019-07-05T18:02:12Z"),
            epochs=24,
            duration_seconds=475.0,
            status=TrainingStatus.SUCCEEDED,
        ),
        configuration=Configuration(program_id="classifier_monitoring.ipynb"),
        data_used=DataUsed(
            dataset_description="PDF documents converted by OCR",
            selection_criteria=_SELECTION,
        ),
        training_params=TrainingParams(
            algorithm="MLP", hyperparameters=dict(_CLASSIFIER_HYPERPARAMS)
        ),
        test_params=TestParams(
            evaluation_procedure=Holdout(fraction=0.05, stratified=False),
            metric_names=("accuracy_training", "accuracy_validation"),
        ),
        results=TrainingResults(
            metrics={
                "accuracy_training": MetricResult(scalar=0.956),
                "accuracy_validation": MetricResult(scalar=0.921),
            },
            model_ref="classifier-v2.1",
        ),
    )


def build_classifier_trail(path) -> TrailStore:
    """A full trail: the actions, lessons and both trainings above."""
    store = TrailStore.open_or_init(path, "classifier-project")
    for ts, description, task in CLASSIFIER_ACTIONS:
        store.append(
            ActionDefinition(
                description=description,
                task=canonical_task(task),
                registered_at=parse_timestamp(ts),
            )
        )
    for ts, description, task in CLASSIFIER_LESSONS:
        store.append(
            Lesson(
                description=description,
                task=canonical_task(task),
                registered_at=parse_timestamp(ts),
            )
        )
    store.append(classifier_test_training())
    store.append(classifier_generation_training())
    return store


@pytest.fixture
def fresh_store(tmp_path) -> TrailStore:
    return TrailStore.open_or_init(tmp_path / "trail", "test-project")


@pytest.fixture
def classifier_trail(tmp_path) -> TrailStore:
    return build_classifier_trail(tmp_path / "trail")


def simple_training(
    algorithm: str = "MLP",
    accuracy: float | tuple[float, ...] | None = 0.9,
    registered_at: str | None = None,
    hyperparameters: dict | None = None,
    status: TrainingStatus = TrainingStatus.SUCCEEDED,
    error_message: str | None = None,
    metrics: dict[str, MetricResult] | None = None,
) -> TrainingRecord:
    """Small training record for query/synthesis fixtures."""
    if metrics is None:
        metrics = {}
        if accuracy is not None:
            if isinstance(accuracy, tuple):
                metrics["accuracy"] = MetricResult(samples=accuracy)
            else:
                metrics["accuracy"] = MetricResult(scalar=accuracy)
    return TrainingRecord(
        context=TrainingContext(
            registered_at=parse_timestamp(registered_at) if registered_at else None,
            status=status,
            error_message=error_message,
        ),
        training_params=TrainingParams(
            algorithm=algorithm, hyperparameters=hyperparameters or {}
        ),
        results=TrainingResults(metrics=metrics),
    )
