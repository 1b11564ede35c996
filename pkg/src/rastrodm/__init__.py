"""rastrodm: an append-only project trail for data mining work.

Register action definitions, training runs and lessons learned into one
project directory, then query, summarize and mine the trail.
"""

from .capture import RunContext, begin_run, wrap_command
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
    TaskRef,
    TestParams,
    TrainingContext,
    TrainingParams,
    TrainingRecord,
    TrainingResults,
    TrainingStatus,
    Violation,
    canonical_task,
    validate_training,
)
from .errors import (
    ClosedRunError,
    CorruptLineError,
    LockTimeoutError,
    RastroError,
    RecordNotFoundError,
    RunValidationError,
    SchemaVersionError,
    StoreError,
    ValidationError,
)
from .metrics import (
    AveragedMetrics,
    AverageMode,
    ClassCounts,
    ClassMetrics,
    ConfusionCounts,
    SummaryStats,
    averaged_metrics,
    class_metrics,
    confusion_from_labels,
    format_class_metrics_row,
    format_mean_std,
    summarize,
)
from .query import (
    FieldSelector,
    Predicate,
    filter_records,
    group_stats,
    parse_predicate,
    top_k,
)
from .reporting import (
    chronology,
    export_mlschema,
    import_mlschema,
    mlschema_json,
    task_report,
)
from .store import RecordKind, TrailStore
from .synthesis import (
    CandidateKind,
    LessonCandidate,
    MonitorResult,
    MonitorStatus,
    RedundancyWarning,
    attribute_improvement,
    best_setting,
    detect_equal_metrics,
    monitor_performance,
    redundancy_warning,
)

__version__ = "0.1.0"

__all__ = [
    "ActionDefinition",
    "ActionStatus",
    "AveragedMetrics",
    "AverageMode",
    "CandidateKind",
    "ClassCounts",
    "ClassMetrics",
    "ClosedRunError",
    "Configuration",
    "ConfusionCounts",
    "CorruptLineError",
    "CrispPhase",
    "CrossValidation",
    "DataUsed",
    "FieldSelector",
    "Holdout",
    "Lesson",
    "LessonCandidate",
    "LessonOrigin",
    "LockTimeoutError",
    "MetricResult",
    "MonitorResult",
    "MonitorStatus",
    "Predicate",
    "RastroError",
    "RecordKind",
    "RecordNotFoundError",
    "RedundancyWarning",
    "RunContext",
    "RunValidationError",
    "SchemaVersionError",
    "StoreError",
    "SummaryStats",
    "TaskRef",
    "TestParams",
    "TrailStore",
    "TrainingContext",
    "TrainingParams",
    "TrainingRecord",
    "TrainingResults",
    "TrainingStatus",
    "ValidationError",
    "Violation",
    "attribute_improvement",
    "averaged_metrics",
    "begin_run",
    "best_setting",
    "canonical_task",
    "chronology",
    "class_metrics",
    "confusion_from_labels",
    "detect_equal_metrics",
    "export_mlschema",
    "filter_records",
    "format_class_metrics_row",
    "format_mean_std",
    "group_stats",
    "import_mlschema",
    "mlschema_json",
    "monitor_performance",
    "parse_predicate",
    "redundancy_warning",
    "summarize",
    "task_report",
    "top_k",
    "validate_training",
    "wrap_command",
]
