from __future__ import annotations

import random
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import pytest

from multispill.ingest import (
    Category,
    FilterCriteria,
    PluginObservation,
    VisitEvent,
    WindowSpec,
    build_panel,
    filter_servers,
    load_panel,
    parse_plugin_log,
    parse_visit_log,
    save_panel,
)

from conftest import make_panel, write_text


def ts(text: str) -> datetime:
    return datetime.fromisoformat(text).astimezone(timezone.utc)


# A span of 8 weeks from the epoch, 2-week windows, permissive filters.
SMALL_WINDOW = WindowSpec(
    study_start_week=0, study_end_week=7, weeks_per_window=2, week_epoch=date(2016, 1, 4)
)
LOOSE = FilterCriteria(min_live_weeks=1, require_governance_info=False, min_survival_weeks=1)


def visit(user: str, server: str, week: int, epoch: date = date(2016, 1, 4)) -> VisitEvent:
    stamp = datetime(epoch.year, epoch.month, epoch.day, 12, tzinfo=timezone.utc)
    return VisitEvent(user, server, stamp + (week * 7) * _DAY)


from datetime import timedelta

_DAY = timedelta(days=1)


class TestParseVisitLog:
    def test_csv_row_maps_fields_directly(self, visits_csv: Path) -> None:
        events, report = parse_visit_log(visits_csv)
        assert report.reject_count == 0
        assert events[0] == VisitEvent("u1", "s1", ts("2016-02-01T00:00:00+00:00"))

    def test_empty_file_is_empty_stream_with_zero_rejects(self, tmp_path: Path) -> None:
        path = write_text(tmp_path / "empty.csv", "user_id,server_id,timestamp\n")
        events, report = parse_visit_log(path)
        assert events == []
        assert report.reject_count == 0

    def test_malformed_row_is_counted_not_dropped_silently(self, tmp_path: Path) -> None:
        path = write_text(
            tmp_path / "v.csv",
            "user_id,server_id,timestamp\n"
            "u1,s1,2016-02-01T00:00:00Z\n"
            "u2,s1\n"
            "u3,s2,2016-02-02T00:00:00Z\n",
        )
        events, report = parse_visit_log(path)
        assert len(events) == 2
        assert report.reject_count == 1
        assert report.rejects[0][0] == 3  # 1-based line number of the bad row

    def test_naive_timestamp_rejected(self, tmp_path: Path) -> None:
        path = write_text(
            tmp_path / "v.csv",
            "user_id,server_id,timestamp\nu1,s1,2016-02-01T00:00:00\n",
        )
        events, report = parse_visit_log(path)
        assert events == []
        assert report.reject_count == 1

    def test_jsonl_format(self, tmp_path: Path) -> None:
        path = write_text(
            tmp_path / "v.jsonl",
            '{"user_id": "u1", "server_id": "s1", "timestamp": "2016-02-01T00:00:00Z"}\n'
            "not json\n"
            '{"user_id": "u2", "server_id": "s2", "timestamp": "2016-02-01T06:00:00+01:00"}\n',
        )
        events, report = parse_visit_log(path, fmt="jsonl")
        assert [e.user_id for e in events] == ["u1", "u2"]
        assert events[1].timestamp == ts("2016-02-01T05:00:00+00:00")
        assert report.reject_count == 1

    def test_missing_file_raises_io_error(self, tmp_path: Path) -> None:
        with pytest.raises(OSError):
            parse_visit_log(tmp_path / "nope.csv")

    def test_unknown_format_rejected(self, visits_csv: Path) -> None:
        with pytest.raises(ValueError):
            parse_visit_log(visits_csv, fmt="xml")


class TestParsePluginLog:
    def test_category_mapping(self, tmp_path: Path) -> None:
        path = write_text(
            tmp_path / "p.csv",
            "server_id,plugin_id,category,week\ns1,antiCheat,admin,6\n",
        )
        observations, report = parse_plugin_log(path)
        assert observations == [PluginObservation("s1", "antiCheat", Category.ADMIN, 6)]
        assert report.unknown_categories == 0

    def test_unknown_category_maps_to_other_with_warning(self, tmp_path: Path) -> None:
        path = write_text(
            tmp_path / "p.csv",
            "server_id,plugin_id,category,week\ns1,terrain,worldgen,2\n",
        )
        observations, report = parse_plugin_log(path)
        assert observations[0].category is Category.OTHER
        assert report.unknown_categories == 1

    def test_five_row_fixture_counts_by_category(self, tmp_path: Path) -> None:
        path = write_text(
            tmp_path / "p.csv",
            "server_id,plugin_id,category,week\n"
            "s1,a1,admin,1\n"
            "s1,a2,admin,1\n"
            "s2,e1,economy,1\n"
            "s2,e2,economy,2\n"
            "s3,x1,worldgen,1\n",
        )
        observations, report = parse_plugin_log(path)
        tallies: dict[Category, int] = {}
        for obs in observations:
            tallies[obs.category] = tallies.get(obs.category, 0) + 1
        assert tallies == {Category.ADMIN: 2, Category.ECONOMY: 2, Category.OTHER: 1}
        assert report.unknown_categories == 1

    def test_bad_week_is_rejected_row(self, tmp_path: Path) -> None:
        path = write_text(
            tmp_path / "p.csv",
            "server_id,plugin_id,category,week\ns1,a1,admin,soon\n",
        )
        observations, report = parse_plugin_log(path)
        assert observations == []
        assert report.reject_count == 1


class TestWindowSpec:
    def test_defaults_match_documented_study(self) -> None:
        spec = WindowSpec()
        assert (spec.study_start_week, spec.study_end_week, spec.weeks_per_window) == (5, 22, 4)
        assert spec.n_windows == 4  # 18 weeks, trailing 2 truncated

    def test_partial_trailing_window_truncated(self) -> None:
        spec = WindowSpec(study_start_week=0, study_end_week=8, weeks_per_window=4)
        assert spec.n_windows == 2
        assert spec.window_of_week(7) == 1
        assert spec.window_of_week(8) is None  # truncated tail week

    def test_week_of_uses_epoch(self) -> None:
        spec = WindowSpec(study_start_week=0, study_end_week=7, week_epoch=date(2016, 1, 4))
        assert spec.week_of(ts("2016-01-04T00:00:00+00:00")) == 0
        assert spec.week_of(ts("2016-01-10T23:59:59+00:00")) == 0
        assert spec.week_of(ts("2016-01-11T00:00:00+00:00")) == 1

    def test_invalid_specs_rejected(self) -> None:
        with pytest.raises(ValueError):
            WindowSpec(weeks_per_window=0)
        with pytest.raises(ValueError):
            WindowSpec(study_start_week=5, study_end_week=4)


class TestFilterServers:
    def test_server_meeting_all_criteria_is_eligible(self) -> None:
        criteria = FilterCriteria(min_live_weeks=4, require_governance_info=True, min_survival_weeks=4)
        events = [visit("u", "s1", w) for w in range(6)]
        plugins = [PluginObservation("s1", "p", Category.ADMIN, 0)]
        eligible, trace = filter_servers(events, plugins, criteria, SMALL_WINDOW)
        assert eligible == {"s1"}
        assert trace.eligible_count == 1

    def test_low_liveness_excluded_at_final_stage(self) -> None:
        criteria = FilterCriteria(min_live_weeks=4, require_governance_info=True, min_survival_weeks=4)
        events = [visit("u", "s1", w) for w in (0, 3, 6)]  # 3 distinct weeks, span 7
        plugins = [PluginObservation("s1", "p", Category.ADMIN, 0)]
        eligible, trace = filter_servers(events, plugins, criteria, SMALL_WINDOW)
        assert eligible == frozenset()
        by_name = {stage.name: stage for stage in trace.stages}
        assert by_name["live_weeks"].removed == 1

    def test_funnel_stage_names_and_order(self) -> None:
        _, trace = filter_servers(
            [visit("u", "s1", 0)],
            [PluginObservation("s1", "p", Category.ADMIN, 0)],
            FilterCriteria(),
            SMALL_WINDOW,
        )
        assert [stage.name for stage in trace.stages] == [
            "connected",
            "survival",
            "governance_info",
            "live_weeks",
        ]

    def test_trace_is_monotone_and_sum_consistent(self) -> None:
        rng = random.Random(7)
        events = []
        plugins = []
        for i in range(40):
            server = f"s{i:02d}"
            weeks = rng.sample(range(8), rng.randint(0, 8))
            events.extend(visit(f"u{i}", server, w) for w in weeks)
            if rng.random() < 0.7:
                plugins.append(PluginObservation(server, "p", Category.ADMIN, 0))
        criteria = FilterCriteria(min_live_weeks=3, require_governance_info=True, min_survival_weeks=2)
        eligible, trace = filter_servers(events, plugins, criteria, SMALL_WINDOW)

        remaining = trace.input_count
        total_removed = 0
        for stage in trace.stages:
            assert stage.remaining == remaining - stage.removed
            remaining = stage.remaining
            total_removed += stage.removed
        assert trace.input_count - total_removed == len(eligible)

    def test_plugin_only_server_removed_as_disconnected(self) -> None:
        eligible, trace = filter_servers(
            [visit("u", "s1", 0)],
            [PluginObservation("ghost", "p", Category.ADMIN, 0)],
            LOOSE,
            SMALL_WINDOW,
        )
        assert "ghost" not in eligible
        assert trace.stages[0].removed == 1


class TestBuildPanel:
    def test_repeat_visits_collapse_to_one_visitor(self) -> None:
        events = [visit("u", "s1", 4), visit("u", "s1", 4), visit("u", "s1", 5)]
        panel = build_panel(events, [], {"s1", "s2"}, SMALL_WINDOW)
        assert panel.visitors_at(2, "s1") == {"u"}

    def test_rule_counts_carry_forward(self) -> None:
        plugins = [
            PluginObservation("s1", "a1", Category.ADMIN, 2),
            PluginObservation("s1", "a2", Category.ADMIN, 2),
        ]
        panel = build_panel([visit("u", "s1", 0)], plugins, {"s1"}, SMALL_WINDOW)
        assert panel.rule_count(0, "s1", Category.ADMIN) == 0  # before first snapshot
        assert panel.rule_count(1, "s1", Category.ADMIN) == 2
        assert panel.rule_count(3, "s1", Category.ADMIN) == 2  # carried forward

    def test_snapshot_is_complete_inventory(self) -> None:
        plugins = [
            PluginObservation("s1", "a1", Category.ADMIN, 0),
            PluginObservation("s1", "e1", Category.ECONOMY, 0),
            # Window 2 snapshot drops the economy plugin entirely.
            PluginObservation("s1", "a1", Category.ADMIN, 4),
        ]
        panel = build_panel([visit("u", "s1", 0)], plugins, {"s1"}, SMALL_WINDOW)
        assert panel.rule_count(0, "s1", Category.ECONOMY) == 1
        assert panel.rule_count(2, "s1", Category.ECONOMY) == 0

    def test_two_server_two_window_fixture_cell_by_cell(self) -> None:
        window = WindowSpec(study_start_week=0, study_end_week=3, weeks_per_window=2)
        events = [
            visit("a", "s1", 0),
            visit("b", "s1", 1),
            visit("a", "s2", 1),
            visit("b", "s2", 2),
            visit("c", "s2", 3),
            visit("a", "s1", 3),
        ]
        plugins = [
            PluginObservation("s1", "a1", Category.ADMIN, 0),
            PluginObservation("s2", "c1", Category.COMMUNICATION, 2),
        ]
        panel = build_panel(events, plugins, {"s1", "s2"}, window)
        # Manual aggregation: window 0 = weeks 0-1, window 1 = weeks 2-3.
        assert panel.visitors_at(0, "s1") == {"a", "b"}
        assert panel.visitors_at(0, "s2") == {"a"}
        assert panel.visitors_at(1, "s1") == {"a"}
        assert panel.visitors_at(1, "s2") == {"b", "c"}
        assert panel.rule_count(0, "s1", Category.ADMIN) == 1
        assert panel.rule_count(1, "s1", Category.ADMIN) == 1
        assert panel.rule_count(0, "s2", Category.COMMUNICATION) == 0
        assert panel.rule_count(1, "s2", Category.COMMUNICATION) == 1
        assert panel.rule_count(1, "s2", Category.ECONOMY) == 0

    def test_permutation_invariance(self) -> None:
        rng = random.Random(13)
        events = [
            visit(f"u{rng.randint(0, 20)}", f"s{rng.randint(0, 4)}", rng.randint(0, 7))
            for _ in range(300)
        ]
        plugins = [
            PluginObservation(f"s{rng.randint(0, 4)}", f"p{rng.randint(0, 9)}",
                              Category.ADMIN, rng.randint(0, 7))
            for _ in range(50)
        ]
        servers = {f"s{i}" for i in range(5)}
        panel_a = build_panel(events, plugins, servers, SMALL_WINDOW)
        shuffled_events = events[:]
        shuffled_plugins = plugins[:]
        rng.shuffle(shuffled_events)
        rng.shuffle(shuffled_plugins)
        panel_b = build_panel(shuffled_events, shuffled_plugins, servers, SMALL_WINDOW)
        assert panel_a.visitors == panel_b.visitors
        assert panel_a.rule_counts == panel_b.rule_counts

    def test_zero_visit_window_kept_with_warning(self) -> None:
        events = [visit("u", "s1", 0)]
        panel = build_panel(events, [], {"s1", "s2"}, SMALL_WINDOW)
        assert set(panel.windows) == {0, 1, 2, 3}
        assert any("zero visits" in warning for warning in panel.warnings)

    def test_empty_eligible_set_rejected(self) -> None:
        with pytest.raises(ValueError):
            build_panel([], [], set(), SMALL_WINDOW)


class TestPanelSerialization:
    def make_fixture_panel(self):
        return make_panel(
            visitors={(0, "s1"): {"a", "b"}, (0, "s2"): {"b"}, (1, "s1"): {"a"}},
            rule_counts={(0, "s1", Category.ADMIN): 2},
            windows=(0, 1),
            servers=("s1", "s2"),
        )

    def test_round_trip(self, tmp_path: Path) -> None:
        panel = self.make_fixture_panel()
        save_panel(panel, None, tmp_path / "panel")
        loaded = load_panel(tmp_path / "panel")
        assert loaded.windows == panel.windows
        assert loaded.servers == panel.servers
        assert loaded.visitors == dict(panel.visitors)
        assert loaded.rule_counts == dict(panel.rule_counts)

    def test_serialization_is_byte_deterministic(self, tmp_path: Path) -> None:
        panel = self.make_fixture_panel()
        save_panel(panel, None, tmp_path / "one")
        save_panel(panel, None, tmp_path / "two")
        for name in ("visitors.csv", "rule_counts.csv", "filter_trace.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
