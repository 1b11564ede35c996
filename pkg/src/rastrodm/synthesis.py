"""Lesson-candidate mining over the training trail, plus health monitoring.

Every detector is a deterministic function of the record sequence: the
same trail yields byte-identical candidate descriptions. Candidates are
proposals only; writing one to the trail as a synthesized lesson is a
separate, explicit step.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Any, Iterable, Sequence

from .core import Lesson, LessonOrigin, TrainingRecord
from .errors import ValidationError
from .query import ABSENT, FieldSelector, as_selector, metric_values, record_view


@dataclass(frozen=True)
class SynthesisSettings:
    """Detector thresholds, overridable per project."""

    equality_tolerance: float = 1e-9
    min_delta_points: float = 0.5
    jaccard_threshold: float = 0.5


class CandidateKind(str, Enum):
    EQUAL_METRICS = "equal-metrics"
    IMPROVEMENT = "improvement"
    BEST_SETTING = "best-setting"
    REDUNDANCY = "redundancy"
    DRIFT = "drift"


_TRAIL_DERIVED = {
    CandidateKind.EQUAL_METRICS,
    CandidateKind.IMPROVEMENT,
    CandidateKind.BEST_SETTING,
}


@dataclass(frozen=True)
class LessonCandidate:
    """A machine-generated lesson proposal with its supporting trainings."""

    description: str
    kind: CandidateKind
    evidence: tuple[int, ...] = ()
    confidence: str = ""

    def __post_init__(self) -> None:
        if self.kind in _TRAIL_DERIVED and not self.evidence:
            raise ValidationError(f"{self.kind.value} candidate needs evidence codes")

    def as_lesson(self, task=None) -> Lesson:
        """Turn the candidate into a lesson record; persisting it stays explicit."""
        return Lesson(
            description=self.description,
            task=task,
            origin=LessonOrigin.SYNTHESIZED,
            related_training_codes=self.evidence,
        )


def _value_lists(record: TrainingRecord) -> dict[str, list[float]]:
    return {name: list(m.values) for name, m in record.results.metrics.items()}


def _agree(a: list[float], b: list[float], tolerance: float) -> bool:
    if len(a) == len(b):
        return all(abs(x - y) <= tolerance for x, y in zip(a, b))
    return abs(sum(a) / len(a) - sum(b) / len(b)) <= tolerance


def detect_equal_metrics(
    records: Iterable[TrainingRecord], tolerance: float = 1e-9
) -> list[LessonCandidate]:
    """Find metric pairs that always agree where recorded together.

    A pair qualifies only when it co-occurs in at least two trainings and
    agrees within tolerance in every one of them.
    """
    rows = [(r.context.code, _value_lists(r)) for r in records]
    names = sorted({name for _code, values in rows for name in values})
    out: list[LessonCandidate] = []
    for a, b in combinations(names, 2):
        hits = [(code, values[a], values[b]) for code, values in rows if a in values and b in values]
        if len(hits) < 2:
            continue
        if all(_agree(va, vb, tolerance) for _code, va, vb in hits):
            evidence = tuple(sorted(code for code, _va, _vb in hits))
            out.append(
                LessonCandidate(
                    description=(
                        f"Metrics '{a}' and '{b}' are equivalent: they agree within "
                        f"{tolerance:g} in all {len(hits)} trainings recording both."
                    ),
                    kind=CandidateKind.EQUAL_METRICS,
                    evidence=evidence,
                    confidence=f"universal over {len(hits)} co-occurrences",
                )
            )
    return out


def _delete_path(node: Any, parts: Sequence[str]) -> None:
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node, dict):
            return
        if part not in node:
            return
        node = node[part]
    if isinstance(node, dict):
        leaf = parts[-1]
        if leaf in node:
            del node[leaf]
        elif parts[-2:-1] == ["results"] and "metrics" in node:
            node["metrics"].pop(leaf, None)
        elif parts[-2:-1] == ["training_params"] and "hyperparameters" in node:
            node["hyperparameters"].pop(leaf, None)


def _setting_signature(view: dict[str, Any], varied: FieldSelector) -> str:
    subset = json.loads(
        json.dumps(
            {
                "configuration": view["configuration"],
                "data_used": view["data_used"],
                "training_params": view["training_params"],
            },
            sort_keys=True,
            ensure_ascii=False,
        )
    )
    _delete_path(subset, varied.path.split("."))
    return json.dumps(subset, sort_keys=True, ensure_ascii=False)


def _fmt_value(value: Any) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    return str(value)


def _group_mean(values: list[float]) -> float:
    return sum(values) / len(values)


def attribute_improvement(
    records: Iterable[TrainingRecord],
    varied_key: FieldSelector | str,
    metric: FieldSelector | str,
    min_delta_points: float = 0.5,
) -> list[LessonCandidate]:
    """Attribute metric movement to one varied setting.

    Records are bucketed by all configuration, data and parameter values
    except the varied key; only groups agreeing on everything else are
    compared, and deltas below the minimum are suppressed.
    """
    varied_sel, metric_sel = as_selector(varied_key), as_selector(metric)
    buckets: dict[str, dict[Any, tuple[list[float], list[int]]]] = {}
    for record in records:
        view = record_view(record)
        varied = varied_sel.resolve(view)
        values = metric_values(metric_sel.resolve(view))
        if varied is ABSENT or values is None:
            continue
        signature = _setting_signature(view, varied_sel)
        groups = buckets.setdefault(signature, {})
        vals, codes = groups.setdefault(varied, ([], []))
        vals.extend(values)
        codes.append(record.context.code)
    out: list[LessonCandidate] = []
    for signature in sorted(buckets):
        groups = buckets[signature]
        if len(groups) < 2:
            continue
        for value_a, value_b in combinations(sorted(groups, key=_fmt_value), 2):
            vals_a, codes_a = groups[value_a]
            vals_b, codes_b = groups[value_b]
            mean_a, mean_b = _group_mean(vals_a), _group_mean(vals_b)
            delta = (mean_b - mean_a) * 100.0
            if abs(delta) < min_delta_points:
                continue
            out.append(
                LessonCandidate(
                    description=(
                        f"Changing {varied_sel.path} from {_fmt_value(value_a)} to "
                        f"{_fmt_value(value_b)} changed mean {metric_sel.path} by "
                        f"{delta:+.1f} points ({mean_a:.4f} to {mean_b:.4f})."
                    ),
                    kind=CandidateKind.IMPROVEMENT,
                    evidence=tuple(sorted(codes_a + codes_b)),
                    confidence=(
                        f"{len(codes_a)} vs {len(codes_b)} trainings, "
                        f"all other declared settings equal"
                    ),
                )
            )
    return out


def best_setting(
    records: Iterable[TrainingRecord],
    param: FieldSelector | str,
    metric: FieldSelector | str,
) -> LessonCandidate | None:
    """Name the best-performing value of one parameter so far.

    Returns None until at least two distinct values have been observed;
    on a tied top mean the tie is reported and no winner declared.
    """
    param_sel, metric_sel = as_selector(param), as_selector(metric)
    groups: dict[Any, tuple[list[float], list[int]]] = {}
    for record in records:
        view = record_view(record)
        value = param_sel.resolve(view)
        values = metric_values(metric_sel.resolve(view))
        if value is ABSENT or values is None:
            continue
        vals, codes = groups.setdefault(value, ([], []))
        vals.extend(values)
        codes.append(record.context.code)
    if len(groups) < 2:
        return None
    means = {value: _group_mean(vals) for value, (vals, _codes) in groups.items()}
    best_mean = max(means.values())
    leaders = sorted((v for v, m in means.items() if m == best_mean), key=_fmt_value)
    evidence = tuple(sorted(code for _vals, codes in groups.values() for code in codes))
    total = len(evidence)
    if len(leaders) > 1:
        tied = ", ".join(_fmt_value(v) for v in leaders)
        return LessonCandidate(
            description=(
                f"No single best {param_sel.path}: {tied} are tied on mean "
                f"{metric_sel.path} {best_mean:.4f}."
            ),
            kind=CandidateKind.BEST_SETTING,
            evidence=evidence,
            confidence=f"tie across {len(leaders)} of {len(groups)} settings",
        )
    winner = leaders[0]
    runners = sorted(
        (value for value in means if value != winner),
        key=lambda value: (-means[value], _fmt_value(value)),
    )
    margins = ", ".join(
        f"better than {_fmt_value(value)} by {(best_mean - means[value]) * 100.0:.1f} points"
        for value in runners
    )
    return LessonCandidate(
        description=(
            f"Best {param_sel.path} so far: {_fmt_value(winner)} with mean "
            f"{metric_sel.path} {best_mean:.4f}; {margins}."
        ),
        kind=CandidateKind.BEST_SETTING,
        evidence=evidence,
        confidence=f"{len(groups)} settings compared over {total} trainings",
    )


_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def token_set(text: str) -> frozenset[str]:
    """Lowercased, punctuation-stripped token set (no stemming)."""
    return frozenset(_TOKEN.findall(text.casefold()))


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


@dataclass(frozen=True)
class RedundancyWarning:
    """An existing record that overlaps a draft action's wording."""

    kind: str  # "action" or "lesson"
    code: int
    description: str
    similarity: float


def redundancy_warning(
    store, draft_action: str, threshold: float | None = None
) -> list[RedundancyWarning]:
    """Match a draft action against everything already registered.

    Similarity is token-set Jaccard between the normalized draft and each
    stored action or lesson description; matches at or above the threshold
    come back highest first.
    """
    if threshold is None:
        threshold = store.config.synthesis.jaccard_threshold
    draft_tokens = token_set(draft_action)
    out: list[RedundancyWarning] = []
    for kind in ("action", "lesson"):
        for record in store.scan(kind):
            score = jaccard(draft_tokens, token_set(record.description))
            if score >= threshold:
                out.append(
                    RedundancyWarning(
                        kind=kind,
                        code=record.code,
                        description=record.description,
                        similarity=score,
                    )
                )
    out.sort(key=lambda w: (-w.similarity, w.kind, w.code))
    return out


class MonitorStatus(str, Enum):
    HEALTHY = "healthy"
    DEGRADED = "degraded"


@dataclass(frozen=True)
class MonitorResult:
    status: MonitorStatus
    flagged: tuple[tuple[Any, float], ...]
    message: str


def monitor_performance(
    series: Sequence[tuple[Any, float]],
    baseline: float,
    drop_threshold: float,
) -> MonitorResult:
    """Flag evaluations that fell too far below a known baseline.

    The series holds (timestamp, accuracy) pairs with accuracy in [0, 1];
    the status is degraded as soon as any point drops below
    baseline - drop_threshold.
    """
    points = list(series)
    if not points:
        raise ValidationError("monitoring needs a non-empty evaluation series")
    for ts, accuracy in points:
        if not 0.0 <= accuracy <= 1.0:
            raise ValidationError(f"accuracy {accuracy!r} at {ts!r} outside [0, 1]")
    cutoff = baseline - drop_threshold
    flagged = tuple((ts, accuracy) for ts, accuracy in points if accuracy < cutoff)
    if flagged:
        return MonitorResult(
            status=MonitorStatus.DEGRADED,
            flagged=flagged,
            message=(
                f"{len(flagged)} evaluation(s) below {cutoff:.4f} "
                f"(baseline {baseline:.4f} - threshold {drop_threshold:.4f}); "
                f"consider regenerating the model from more recent data."
            ),
        )
    return MonitorResult(
        status=MonitorStatus.HEALTHY,
        flagged=(),
        message=f"all {len(points)} evaluation(s) within {drop_threshold:.4f} of baseline.",
    )
