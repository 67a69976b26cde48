"""Raw log parsing, server eligibility filtering, and windowed panel assembly."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

__all__ = [
    "Category",
    "GOVERNANCE_CATEGORIES",
    "DEFAULT_CATEGORY_MAPPING",
    "VisitEvent",
    "PluginObservation",
    "WindowSpec",
    "FilterCriteria",
    "FilterStage",
    "FilterTrace",
    "PanelDataset",
    "ParseReport",
    "parse_visit_log",
    "parse_plugin_log",
    "filter_servers",
    "build_panel",
    "save_panel",
    "load_panel",
    "load_filter_trace",
]


class Category(Enum):
    """Plugin category. Other is retained on input but excluded from analysis layers."""

    ADMIN = "Admin"
    COMMUNICATION = "Communication"
    ECONOMY = "Economy"
    INFORMATION = "Information"
    OTHER = "Other"


GOVERNANCE_CATEGORIES: tuple[Category, ...] = (
    Category.ADMIN,
    Category.COMMUNICATION,
    Category.ECONOMY,
    Category.INFORMATION,
)

DEFAULT_CATEGORY_MAPPING: dict[str, Category] = {
    "admin": Category.ADMIN,
    "administration": Category.ADMIN,
    "communication": Category.COMMUNICATION,
    "chat": Category.COMMUNICATION,
    "economy": Category.ECONOMY,
    "information": Category.INFORMATION,
    "info": Category.INFORMATION,
    "other": Category.OTHER,
}


@dataclass(frozen=True)
class VisitEvent:
    user_id: str
    server_id: str
    timestamp: datetime  # timezone-aware, UTC


@dataclass(frozen=True)
class PluginObservation:
    server_id: str
    plugin_id: str
    category: Category
    observed_week: int


@dataclass(frozen=True)
class WindowSpec:
    """Study span in week indices, plus the week-to-window aggregation rule.

    Week indices are absolute: week w covers the 7 days starting at
    ``week_epoch + 7*w`` days. A trailing partial window (span not divisible
    by ``weeks_per_window``) is truncated.
    """

    study_start_week: int = 5
    study_end_week: int = 22
    weeks_per_window: int = 4
    week_epoch: date = date(2016, 1, 4)

    def __post_init__(self) -> None:
        if self.weeks_per_window < 1:
            raise ValueError("weeks_per_window must be >= 1")
        if self.study_end_week < self.study_start_week:
            raise ValueError("study_end_week must be >= study_start_week")
        if self.n_windows < 1:
            raise ValueError("study span shorter than one window")

    @property
    def span_weeks(self) -> int:
        return self.study_end_week - self.study_start_week + 1

    @property
    def n_windows(self) -> int:
        return self.span_weeks // self.weeks_per_window

    @property
    def windows(self) -> tuple[int, ...]:
        return tuple(range(self.n_windows))

    def week_of(self, timestamp: datetime) -> int:
        return (timestamp.astimezone(timezone.utc).date() - self.week_epoch).days // 7

    def window_of_week(self, week: int) -> int | None:
        """Window index for an absolute week, or None outside the truncated span."""
        offset = week - self.study_start_week
        if offset < 0:
            return None
        window = offset // self.weeks_per_window
        return window if window < self.n_windows else None

    def in_span(self, week: int) -> bool:
        return self.study_start_week <= week <= self.study_end_week


@dataclass(frozen=True)
class FilterCriteria:
    min_live_weeks: int = 16
    require_governance_info: bool = True
    min_survival_weeks: int = 4

    def __post_init__(self) -> None:
        if self.min_live_weeks < 0 or self.min_survival_weeks < 0:
            raise ValueError("filter thresholds must be >= 0")


@dataclass
class ParseReport:
    """Per-file parse outcome: row count, accumulated rejects, category warnings."""

    rows: int = 0
    rejects: list[tuple[int, str]] = field(default_factory=list)
    unknown_categories: int = 0

    @property
    def reject_count(self) -> int:
        return len(self.rejects)


def _parse_rfc3339(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("timestamp missing UTC offset")
    return ts.astimezone(timezone.utc)


def parse_visit_log(path: str | Path, fmt: str = "csv") -> tuple[list[VisitEvent], ParseReport]:
    """Parse a visit log into events, accumulating malformed rows instead of aborting.

    Args:
        path: CSV file with header ``user_id,server_id,timestamp`` (RFC 3339
            timestamps) or JSON-lines with the same keys.
        fmt: "csv" or "jsonl".

    Returns:
        Events in file order and a ParseReport listing rejected rows.

    Raises:
        OSError: if the file cannot be read.
        ValueError: on an unknown format name.
    """
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown visit log format: {fmt!r}")
    events: list[VisitEvent] = []
    report = ParseReport()
    with open(path, newline="", encoding="utf-8") as handle:
        rows: Iterable[tuple[int, dict | None, str]]
        if fmt == "csv":
            rows = _csv_rows(handle)
        else:
            rows = _jsonl_rows(handle)
        for line_no, record, problem in rows:
            report.rows += 1
            if record is None:
                report.rejects.append((line_no, problem))
                continue
            try:
                event = VisitEvent(
                    user_id=_require(record, "user_id"),
                    server_id=_require(record, "server_id"),
                    timestamp=_parse_rfc3339(_require(record, "timestamp")),
                )
            except (KeyError, ValueError) as exc:
                report.rejects.append((line_no, str(exc)))
                continue
            events.append(event)
    return events, report


def parse_plugin_log(
    path: str | Path,
    category_mapping: Mapping[str, Category] | None = None,
) -> tuple[list[PluginObservation], ParseReport]:
    """Parse a plugin log (CSV ``server_id,plugin_id,category,week``).

    Category strings are looked up case-insensitively in ``category_mapping``;
    unknown strings map to Other and are tallied in ``unknown_categories``.
    """
    mapping = dict(DEFAULT_CATEGORY_MAPPING if category_mapping is None else category_mapping)
    observations: list[PluginObservation] = []
    report = ParseReport()
    with open(path, newline="", encoding="utf-8") as handle:
        for line_no, record, problem in _csv_rows(handle):
            report.rows += 1
            if record is None:
                report.rejects.append((line_no, problem))
                continue
            try:
                server_id = _require(record, "server_id")
                plugin_id = _require(record, "plugin_id")
                raw_category = _require(record, "category")
                week = int(_require(record, "week"))
            except (KeyError, ValueError) as exc:
                report.rejects.append((line_no, str(exc)))
                continue
            category = mapping.get(raw_category.strip().lower())
            if category is None:
                category = Category.OTHER
                report.unknown_categories += 1
            observations.append(PluginObservation(server_id, plugin_id, category, week))
    return observations, report


def _require(record: Mapping[str, object], key: str) -> str:
    value = record.get(key)
    if value is None or (isinstance(value, str) and not value.strip()):
        raise ValueError(f"missing field {key!r}")
    return str(value).strip()


def _csv_rows(handle) -> Iterable[tuple[int, dict | None, str]]:
    reader = csv.DictReader(handle)
    for line_no, row in enumerate(reader, start=2):
        if None in row.values():
            yield line_no, None, "too few columns"
        elif None in row:
            yield line_no, None, "too many columns"
        else:
            yield line_no, row, ""


def _jsonl_rows(handle) -> Iterable[tuple[int, dict | None, str]]:
    for line_no, line in enumerate(handle, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            yield line_no, None, f"invalid JSON: {exc.msg}"
            continue
        if not isinstance(record, dict):
            yield line_no, None, "row is not a JSON object"
        else:
            yield line_no, record, ""


@dataclass(frozen=True)
class FilterStage:
    name: str
    removed: int
    remaining: int


@dataclass(frozen=True)
class FilterTrace:
    """Eligibility funnel: servers removed at each stage, in application order."""

    input_count: int
    stages: tuple[FilterStage, ...]

    @property
    def eligible_count(self) -> int:
        return self.stages[-1].remaining if self.stages else self.input_count


def filter_servers(
    events: Iterable[VisitEvent],
    plugins: Iterable[PluginObservation],
    criteria: FilterCriteria,
    window: WindowSpec,
) -> tuple[frozenset[str], FilterTrace]:
    """Apply the eligibility funnel and record its trace.

    Stages, in order: connected (>=1 visit anywhere), survival (first-to-last
    visit span in weeks, inclusive), governance_info (>=1 plugin observation
    overall; a zero count inside a category is legitimate data), live_weeks
    (distinct visit weeks inside the study span).
    """
    visit_weeks: dict[str, set[int]] = defaultdict(set)
    for event in events:
        visit_weeks[event.server_id].add(window.week_of(event.timestamp))
    has_plugins: set[str] = {obs.server_id for obs in plugins}

    universe = sorted(set(visit_weeks) | has_plugins)
    stages: list[FilterStage] = []
    survivors = list(universe)

    def apply(name: str, keep) -> None:
        nonlocal survivors
        kept = [s for s in survivors if keep(s)]
        stages.append(FilterStage(name, len(survivors) - len(kept), len(kept)))
        survivors = kept

    apply("connected", lambda s: bool(visit_weeks.get(s)))
    apply(
        "survival",
        lambda s: max(visit_weeks[s]) - min(visit_weeks[s]) + 1 >= criteria.min_survival_weeks,
    )
    if criteria.require_governance_info:
        apply("governance_info", lambda s: s in has_plugins)
    else:
        apply("governance_info", lambda s: True)
    apply(
        "live_weeks",
        lambda s: sum(1 for w in visit_weeks[s] if window.in_span(w)) >= criteria.min_live_weeks,
    )

    return frozenset(survivors), FilterTrace(len(universe), tuple(stages))


@dataclass(frozen=True)
class PanelDataset:
    """Per-window, per-server aggregates over eligible servers.

    ``visitors`` may omit empty cells; ``rule_counts`` is total over every
    (window, eligible server, governance category) triple. Immutable after
    construction and safe to share across threads.
    """

    windows: tuple[int, ...]
    servers: tuple[str, ...]
    visitors: Mapping[tuple[int, str], frozenset[str]]
    rule_counts: Mapping[tuple[int, str, Category], int]
    warnings: tuple[str, ...] = ()

    def visitors_at(self, window: int, server: str) -> frozenset[str]:
        return self.visitors.get((window, server), frozenset())

    def rule_count(self, window: int, server: str, category: Category) -> int:
        return self.rule_counts[(window, server, category)]


def build_panel(
    events: Iterable[VisitEvent],
    plugins: Iterable[PluginObservation],
    eligible_servers: frozenset[str] | set[str],
    window: WindowSpec,
) -> PanelDataset:
    """Aggregate events and plugin observations into a PanelDataset.

    Visitor sets are distinct user ids per (window, server). Rule counts are
    distinct plugin ids per category in a window's snapshot; windows without
    any observation for a server carry the latest prior snapshot forward
    (a snapshot is treated as a complete inventory). Output is independent of
    input ordering.
    """
    if not eligible_servers:
        raise ValueError("eligible_servers is empty")
    eligible = frozenset(eligible_servers)
    warnings: list[str] = []

    visitors: dict[tuple[int, str], set[str]] = defaultdict(set)
    out_of_span = 0
    for event in events:
        if event.server_id not in eligible:
            continue
        w = window.window_of_week(window.week_of(event.timestamp))
        if w is None:
            out_of_span += 1
            continue
        visitors[(w, event.server_id)].add(event.user_id)
    if out_of_span:
        warnings.append(f"{out_of_span} visit events outside the truncated study span")

    # Snapshot inventories keyed by (server, window offset from study start);
    # offsets may be negative so pre-study snapshots seed the carry-forward.
    snapshots: dict[tuple[str, int], dict[Category, set[str]]] = defaultdict(
        lambda: {c: set() for c in GOVERNANCE_CATEGORIES}
    )
    for obs in plugins:
        if obs.server_id not in eligible:
            continue
        offset = (obs.observed_week - window.study_start_week) // window.weeks_per_window
        if offset >= window.n_windows:
            continue
        inventory = snapshots[(obs.server_id, offset)]
        if obs.category is not Category.OTHER:
            inventory[obs.category].add(obs.plugin_id)

    rule_counts: dict[tuple[int, str, Category], int] = {}
    by_server: dict[str, list[int]] = defaultdict(list)
    for server, offset in snapshots:
        by_server[server].append(offset)
    for server in sorted(eligible):
        offsets = sorted(by_server.get(server, []))
        current = {c: 0 for c in GOVERNANCE_CATEGORIES}
        pos = 0
        for w in window.windows:
            while pos < len(offsets) and offsets[pos] <= w:
                inventory = snapshots[(server, offsets[pos])]
                current = {c: len(inventory[c]) for c in GOVERNANCE_CATEGORIES}
                pos += 1
            for category in GOVERNANCE_CATEGORIES:
                rule_counts[(w, server, category)] = current[category]

    for w in window.windows:
        if not any(visitors.get((w, s)) for s in eligible):
            warnings.append(f"window {w} has zero visits across all servers")

    return PanelDataset(
        windows=window.windows,
        servers=tuple(sorted(eligible)),
        visitors={key: frozenset(users) for key, users in visitors.items()},
        rule_counts=rule_counts,
        warnings=tuple(warnings),
    )


def save_panel(panel: PanelDataset, trace: FilterTrace | None, out_dir: str | Path) -> None:
    """Serialize a panel to ``visitors.csv``, ``rule_counts.csv``, ``filter_trace.csv``.

    Rows are fully sorted so identical inputs serialize byte-identically.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "visitors.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["window", "server", "user"])
        rows = [
            (w, s, u)
            for (w, s), users in panel.visitors.items()
            for u in users
        ]
        writer.writerows(sorted(rows))

    with open(out / "rule_counts.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["window", "server", "category", "count"])
        rows = [
            (w, s, c.value, n)
            for (w, s, c), n in panel.rule_counts.items()
        ]
        writer.writerows(sorted(rows))

    with open(out / "filter_trace.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["stage", "removed", "remaining"])
        if trace is not None:
            writer.writerow(["input", 0, trace.input_count])
            for stage in trace.stages:
                writer.writerow([stage.name, stage.removed, stage.remaining])


def load_panel(panel_dir: str | Path) -> PanelDataset:
    """Load a panel serialized by :func:`save_panel`."""
    base = Path(panel_dir)
    visitors: dict[tuple[int, str], set[str]] = defaultdict(set)
    servers: set[str] = set()
    windows: set[int] = set()

    with open(base / "visitors.csv", newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            w = int(row["window"])
            visitors[(w, row["server"])].add(row["user"])
            windows.add(w)

    rule_counts: dict[tuple[int, str, Category], int] = {}
    with open(base / "rule_counts.csv", newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            w = int(row["window"])
            windows.add(w)
            servers.add(row["server"])
            rule_counts[(w, row["server"], Category(row["category"]))] = int(row["count"])

    return PanelDataset(
        windows=tuple(sorted(windows)),
        servers=tuple(sorted(servers)),
        visitors={key: frozenset(users) for key, users in visitors.items()},
        rule_counts=rule_counts,
    )


def load_filter_trace(panel_dir: str | Path) -> FilterTrace:
    stages: list[FilterStage] = []
    input_count = 0
    with open(Path(panel_dir) / "filter_trace.csv", newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            if row["stage"] == "input":
                input_count = int(row["remaining"])
            else:
                stages.append(FilterStage(row["stage"], int(row["removed"]), int(row["remaining"])))
    return FilterTrace(input_count, tuple(stages))
