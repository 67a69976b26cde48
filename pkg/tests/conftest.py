from __future__ import annotations

from pathlib import Path

import pytest

from multispill.ingest import Category, PanelDataset

FIXTURE_VISITS = """user_id,server_id,timestamp
u1,s1,2016-02-01T00:00:00Z
u2,s1,2016-02-02T10:30:00Z
u1,s2,2016-02-03T23:59:59Z
"""


def write_text(path: Path, content: str) -> Path:
    path.write_text(content, encoding="utf-8")
    return path


def make_panel(
    visitors: dict[tuple[int, str], set[str]],
    rule_counts: dict[tuple[int, str, Category], int] | None = None,
    windows: tuple[int, ...] | None = None,
    servers: tuple[str, ...] | None = None,
) -> PanelDataset:
    """Assemble a PanelDataset by hand, filling absent rule counts with zero."""
    if windows is None:
        windows = tuple(sorted({w for w, _ in visitors}))
    if servers is None:
        servers = tuple(sorted({s for _, s in visitors}))
    counts = dict(rule_counts or {})
    for w in windows:
        for s in servers:
            for category in (
                Category.ADMIN,
                Category.COMMUNICATION,
                Category.ECONOMY,
                Category.INFORMATION,
            ):
                counts.setdefault((w, s, category), 0)
    return PanelDataset(
        windows=windows,
        servers=servers,
        visitors={key: frozenset(users) for key, users in visitors.items()},
        rule_counts=counts,
    )


@pytest.fixture
def visits_csv(tmp_path: Path) -> Path:
    return write_text(tmp_path / "visits.csv", FIXTURE_VISITS)
