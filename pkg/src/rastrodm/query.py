"""Filtering, grouping and aggregation over trail records.

Records are addressed through dotted field paths. Two conveniences make
common queries short: a name missing under ``results`` falls through to
``results.metrics`` and one missing under ``training_params`` falls
through to ``training_params.hyperparameters``, so ``results.accuracy``
reaches the accuracy metric directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Sequence

from . import core
from .core import ActionDefinition, Lesson, MetricResult, TrainingRecord
from .errors import ValidationError
from .metrics import SummaryStats, summarize

if TYPE_CHECKING:
    from .store import TrailStore

ABSENT = object()

OPS = ("=", "!=", "<", ">", "~", "?", "!?")
_VALUELESS = ("?", "!?")


@dataclass(frozen=True)
class FieldSelector:
    """Dotted path into a record, e.g. ``training_params.algorithm``."""

    path: str

    def __post_init__(self) -> None:
        parts = self.path.split(".")
        if not self.path or any(not p for p in parts):
            raise ValidationError(f"malformed field selector {self.path!r}")

    def resolve(self, view: Mapping[str, Any]) -> Any:
        """Value at this path in a record view, or ABSENT."""
        node: Any = view
        parts = self.path.split(".")
        for i, part in enumerate(parts):
            if not isinstance(node, Mapping):
                return ABSENT
            if part in node:
                node = node[part]
                continue
            fallback = _fallthrough(node, parts[:i], part)
            if fallback is ABSENT:
                return ABSENT
            node = fallback
        if node is None:
            return ABSENT
        return node


def _fallthrough(node: Mapping[str, Any], prefix: list[str], part: str) -> Any:
    if prefix and prefix[-1] == "results" and "metrics" in node:
        return node["metrics"].get(part, ABSENT)
    if prefix and prefix[-1] == "training_params" and "hyperparameters" in node:
        return node["hyperparameters"].get(part, ABSENT)
    return ABSENT


def as_selector(sel: FieldSelector | str) -> FieldSelector:
    return sel if isinstance(sel, FieldSelector) else FieldSelector(sel)


def record_view(record: ActionDefinition | TrainingRecord | Lesson) -> dict[str, Any]:
    """Plain nested dict form of a record for selectors and predicates.

    Enum fields become their string values, timestamps their ISO form and
    metric results a float (scalar) or list of floats (samples). Training
    views also alias code and registered_at at the top level, matching
    the stored line layout.
    """
    if isinstance(record, TrainingRecord):
        ctx = record.context
        registered = core.format_timestamp(ctx.registered_at) if ctx.registered_at else None
        proc = record.test_params.evaluation_procedure
        proc_view: dict[str, Any] | None = None
        if proc is not None:
            proc_view = {"kind": proc.kind}
            for name in ("fraction", "stratified", "partitions", "repetitions"):
                if hasattr(proc, name):
                    proc_view[name] = getattr(proc, name)
        return {
            "code": ctx.code,
            "registered_at": registered,
            "context": {
                "code": ctx.code,
                "registered_at": registered,
                "epochs": ctx.epochs,
                "duration_seconds": ctx.duration_seconds,
                "status": ctx.status.value,
                "error_message": ctx.error_message,
            },
            "configuration": {
                "program_id": record.configuration.program_id,
                "library_versions": dict(record.configuration.library_versions),
                "hardware": record.configuration.hardware,
                "random_seed": record.configuration.random_seed,
            },
            "data_used": {
                "dataset_description": record.data_used.dataset_description,
                "selection_criteria": record.data_used.selection_criteria,
                "feature_names": list(record.data_used.feature_names),
                "record_count": record.data_used.record_count,
                "class_count": record.data_used.class_count,
            },
            "training_params": {
                "algorithm": record.training_params.algorithm,
                "hyperparameters": dict(record.training_params.hyperparameters),
            },
            "test_params": {
                "evaluation_procedure": proc_view,
                "metric_names": list(record.test_params.metric_names),
            },
            "results": {
                "metrics": {
                    name: _metric_view(metric)
                    for name, metric in record.results.metrics.items()
                },
                "model_ref": record.results.model_ref,
            },
        }
    view: dict[str, Any] = {
        "code": record.code,
        "registered_at": (
            core.format_timestamp(record.registered_at) if record.registered_at else None
        ),
        "description": record.description,
        "task": (
            {"phase": record.task.phase.value, "task": record.task.task}
            if record.task
            else None
        ),
    }
    if isinstance(record, ActionDefinition):
        view["resources"] = record.resources
        view["status"] = record.status.value
    else:
        view["origin"] = record.origin.value
        view["related_training_codes"] = list(record.related_training_codes)
    return view


def _metric_view(metric: MetricResult) -> float | list[float]:
    if metric.scalar is not None:
        return float(metric.scalar)
    return list(metric.samples or ())


def _numeric(value: Any) -> float | None:
    """Value as a float for comparisons; sample lists compare by mean."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list) and value and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return sum(value) / len(value)
    return None


@dataclass(frozen=True)
class Atom:
    """One predicate clause: ``path op value``."""

    selector: FieldSelector
    op: str
    value: str | None = None

    def matches(self, view: Mapping[str, Any]) -> bool:
        resolved = self.selector.resolve(view)
        if self.op == "?":
            return resolved is not ABSENT
        if self.op == "!?":
            return resolved is ABSENT
        if resolved is ABSENT:
            return False
        if self.op == "=":
            return _equal(resolved, self.value)
        if self.op == "!=":
            return not _equal(resolved, self.value)
        if self.op == "~":
            return str(self.value) in _text(resolved)
        number = _numeric(resolved)
        target = _parse_number(self.value)
        if number is not None and target is not None:
            return number < target if self.op == "<" else number > target
        left, right = _text(resolved), str(self.value)
        return left < right if self.op == "<" else left > right


def _parse_number(text: str | None) -> float | None:
    if text is None:
        return None
    try:
        return float(text)
    except ValueError:
        return None


def _text(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _equal(resolved: Any, raw: str | None) -> bool:
    if isinstance(resolved, bool):
        return (raw or "").casefold() == _text(resolved)
    number = _numeric(resolved)
    target = _parse_number(raw)
    if number is not None and target is not None:
        return number == target
    return _text(resolved) == str(raw)


@dataclass(frozen=True)
class Predicate:
    """Conjunction of atoms; the empty predicate matches everything."""

    atoms: tuple[Atom, ...] = ()

    def matches(self, view: Mapping[str, Any]) -> bool:
        return all(atom.matches(view) for atom in self.atoms)


def parse_predicate(source: str | Sequence[str]) -> Predicate:
    """Parse ``path op [value]`` triples into a predicate.

    ``?`` and ``!?`` take no value; every other op takes exactly one
    token. Raises ValidationError on malformed input.
    """
    tokens = source.split() if isinstance(source, str) else list(source)
    atoms: list[Atom] = []
    i = 0
    while i < len(tokens):
        path = tokens[i]
        if i + 1 >= len(tokens):
            raise ValidationError(f"missing operator after {path!r}")
        op = tokens[i + 1]
        if op not in OPS:
            raise ValidationError(f"unknown predicate operator {op!r}")
        if op in _VALUELESS:
            atoms.append(Atom(FieldSelector(path), op))
            i += 2
            continue
        if i + 2 >= len(tokens):
            raise ValidationError(f"missing value after {path!r} {op}")
        atoms.append(Atom(FieldSelector(path), op, tokens[i + 2]))
        i += 3
    return Predicate(atoms=tuple(atoms))


def filter_records(store: "TrailStore", kind, predicate: Predicate) -> list[Any]:
    """Order-preserving subset of a kind's records matching the predicate."""
    return [r for r in store.scan(kind) if predicate.matches(record_view(r))]


@dataclass(frozen=True)
class GroupedStats:
    """Per-group summary statistics plus the count of skipped records."""

    groups: dict[Any, SummaryStats]
    skipped: int


def metric_values(resolved: Any) -> list[float] | None:
    if isinstance(resolved, bool):
        return None
    if isinstance(resolved, (int, float)):
        return [float(resolved)]
    if isinstance(resolved, list):
        if not resolved:
            return None
        out = []
        for v in resolved:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                return None
            out.append(float(v))
        return out
    return None


def group_stats(
    records: Iterable[Any],
    key: FieldSelector | str,
    metric: FieldSelector | str,
) -> GroupedStats:
    """Summarize a metric per distinct key value.

    Sample-list metrics are flattened into their group. Records where the
    key or the metric does not resolve to usable values are skipped and
    counted, never dropped silently.
    """
    key_sel, metric_sel = as_selector(key), as_selector(metric)
    buckets: dict[Any, list[float]] = {}
    skipped = 0
    for record in records:
        view = record_view(record)
        group = key_sel.resolve(view)
        values = metric_values(metric_sel.resolve(view))
        if group is ABSENT or values is None:
            skipped += 1
            continue
        if isinstance(group, list):
            group = tuple(group)
        buckets.setdefault(group, []).extend(values)
    return GroupedStats(
        groups={group: summarize(vals) for group, vals in buckets.items()},
        skipped=skipped,
    )


def top_k(records: Iterable[TrainingRecord], metric: FieldSelector | str, k: int) -> list[TrainingRecord]:
    """Best k training records by a metric, descending.

    Sample-list metrics compare by their mean; ties break toward the
    lower code, so the ordering is deterministic and top_k output is a
    prefix of top_(k+1) output.
    """
    if k < 1:
        raise ValidationError(f"k must be at least 1, got {k}")
    metric_sel = as_selector(metric)
    scored: list[tuple[float, int, TrainingRecord]] = []
    for record in records:
        value = _numeric(metric_sel.resolve(record_view(record)))
        if value is None:
            continue
        scored.append((value, record.context.code, record))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [record for _value, _code, record in scored[:k]]
