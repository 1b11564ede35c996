"""Classification metrics and sample summary statistics.

Covers per-class precision/recall/F1 with micro, macro and weighted
averaging over a confusion-count table, plus the five-number summary
with mean and sample standard deviation used for "x% +- y%" displays.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import ValidationError


@dataclass(frozen=True)
class ClassCounts:
    """True-positive, false-positive and false-negative counts for one class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class counts over a fixed class list.

    For single-label data the totals balance: sum of tp + fn equals the
    instance count, which equals sum of tp + fp.
    """

    classes: tuple[Hashable, ...]
    counts: Mapping[Hashable, ClassCounts]

    def total_instances(self) -> int:
        return sum(c.tp + c.fn for c in self.counts.values())


def confusion_from_labels(
    truth: Sequence[Hashable],
    predicted: Sequence[Hashable],
    classes: Sequence[Hashable],
) -> ConfusionCounts:
    """Build confusion counts from parallel truth/prediction sequences."""
    if len(truth) != len(predicted):
        raise ValidationError(
            f"length mismatch: {len(truth)} truth labels vs {len(predicted)} predictions"
        )
    known = set(classes)
    if len(known) != len(classes):
        raise ValidationError("duplicate class labels")
    tally = {cls: [0, 0, 0] for cls in classes}  # tp, fp, fn
    for t, p in zip(truth, predicted):
        if t not in known:
            raise ValidationError(f"unknown truth label {t!r}")
        if p not in known:
            raise ValidationError(f"unknown predicted label {p!r}")
        if t == p:
            tally[t][0] += 1
        else:
            tally[p][1] += 1
            tally[t][2] += 1
    return ConfusionCounts(
        classes=tuple(classes),
        counts={cls: ClassCounts(tp=v[0], fp=v[1], fn=v[2]) for cls, v in tally.items()},
    )


@dataclass(frozen=True)
class ClassMetrics:
    """Precision, recall, F1 and support for one class.

    Ratios with a zero denominator are reported as 0.0 and flagged in
    ``undefined`` so averages stay defined for low-support classes.
    """

    precision: float
    recall: float
    f1: float
    support: int
    undefined: frozenset[str] = frozenset()


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def class_metrics(counts: ConfusionCounts, cls: Hashable) -> ClassMetrics:
    """Metrics for one class of a confusion table."""
    if cls not in counts.counts:
        raise ValidationError(f"unknown class {cls!r}")
    c = counts.counts[cls]
    precision, p_undef = _ratio(c.tp, c.tp + c.fp)
    recall, r_undef = _ratio(c.tp, c.tp + c.fn)
    undefined = set()
    if p_undef:
        undefined.add("precision")
    if r_undef:
        undefined.add("recall")
    if precision + recall == 0.0:
        f1 = 0.0
        undefined.add("f1")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return ClassMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        support=c.tp + c.fn,
        undefined=frozenset(undefined),
    )


class AverageMode(str, Enum):
    MICRO = "micro"
    MACRO = "macro"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class AveragedMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    mode: AverageMode


def averaged_metrics(counts: ConfusionCounts, mode: AverageMode | str) -> AveragedMetrics:
    """Aggregate per-class metrics.

    micro pools counts before taking ratios, macro is the unweighted mean
    over classes and weighted weights each class by its support. Accuracy
    is pooled true positives over total instances.
    """
    mode = AverageMode(mode)
    total = counts.total_instances()
    if total == 0:
        raise ValidationError("averaged metrics need at least one instance")
    accuracy = sum(c.tp for c in counts.counts.values()) / total

    if mode is AverageMode.MICRO:
        tp = sum(c.tp for c in counts.counts.values())
        fp = sum(c.fp for c in counts.counts.values())
        fn = sum(c.fn for c in counts.counts.values())
        precision, _ = _ratio(tp, tp + fp)
        recall, _ = _ratio(tp, tp + fn)
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        return AveragedMetrics(precision, recall, f1, accuracy, mode)

    per_class = [class_metrics(counts, cls) for cls in counts.classes]
    if mode is AverageMode.MACRO:
        n = len(per_class)
        return AveragedMetrics(
            precision=sum(m.precision for m in per_class) / n,
            recall=sum(m.recall for m in per_class) / n,
            f1=sum(m.f1 for m in per_class) / n,
            accuracy=accuracy,
            mode=mode,
        )
    weight = sum(m.support for m in per_class)
    return AveragedMetrics(
        precision=sum(m.precision * m.support for m in per_class) / weight,
        recall=sum(m.recall * m.support for m in per_class) / weight,
        f1=sum(m.f1 * m.support for m in per_class) / weight,
        accuracy=accuracy,
        mode=mode,
    )


@dataclass(frozen=True)
class SummaryStats:
    """Five-number summary plus mean and sample standard deviation."""

    n: int
    mean: float
    sample_std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


def summarize(samples: Iterable[float]) -> SummaryStats:
    """Summarize a non-empty sample set.

    The standard deviation uses the n-1 estimator (0 for a single value);
    quartiles interpolate linearly between sorted order statistics.
    """
    values = [float(v) for v in samples]
    if not values:
        raise ValidationError("cannot summarize an empty sample set")
    for v in values:
        if not math.isfinite(v):
            raise ValidationError(f"non-finite sample {v!r}")
    n = len(values)
    mean = statistics.fmean(values)
    if n == 1:
        v = values[0]
        return SummaryStats(n=1, mean=v, sample_std=0.0, min=v, q1=v, median=v, q3=v, max=v)
    std = statistics.stdev(values)
    q1, median, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return SummaryStats(
        n=n,
        mean=mean,
        sample_std=std,
        min=min(values),
        q1=q1,
        median=median,
        q3=q3,
        max=max(values),
    )


def format_percent(value: float, decimals: int) -> str:
    """Render a 0..1 ratio as a percentage string."""
    return f"{value * 100:.{decimals}f}%"


def format_mean_std(stats: SummaryStats) -> str:
    """Summary display with one decimal, e.g. ``91.1% +- 0.3%``."""
    return f"{format_percent(stats.mean, 1)} +- {format_percent(stats.sample_std, 1)}"


def format_class_metrics_row(m: ClassMetrics) -> str:
    """Per-class table cells with two decimals, e.g. ``93.33% 93.33% 93.33% 15``."""
    return (
        f"{format_percent(m.precision, 2)} {format_percent(m.recall, 2)} "
        f"{format_percent(m.f1, 2)} {m.support}"
    )
