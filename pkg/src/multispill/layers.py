"""Per-window dichotomized link layers over server dyads."""

from __future__ import annotations

import csv
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence, TypeVar

from .ingest import Category, PanelDataset

__all__ = [
    "Dyad",
    "dyad",
    "Layer",
    "MedianSupport",
    "RuleLinkMode",
    "DegenerateWindowError",
    "LayerSnapshot",
    "median_split",
    "shared_membership_weights",
    "build_traffic_layer",
    "build_rule_dummies",
    "build_rule_layer",
    "rule_layer_for_window",
    "write_links_csv",
    "write_medians_csv",
]

K = TypeVar("K", bound=Hashable)

Dyad = tuple[str, str]


def dyad(a: str, b: str) -> Dyad:
    """Canonical unordered server pair (endpoints sorted, no self-pairs)."""
    if a == b:
        raise ValueError(f"self-pair is not a dyad: {a!r}")
    return (a, b) if a < b else (b, a)


class Layer(Enum):
    """The five link layers: shared-membership traffic plus four rule-similarity layers."""

    TRAFFIC = "traffic"
    RULE_ADMIN = "rule_admin"
    RULE_COMMUNICATION = "rule_communication"
    RULE_ECONOMY = "rule_economy"
    RULE_INFORMATION = "rule_information"

    @property
    def category(self) -> Category | None:
        return _LAYER_CATEGORY.get(self)

    @classmethod
    def for_category(cls, category: Category) -> "Layer":
        for layer, cat in _LAYER_CATEGORY.items():
            if cat is category:
                return layer
        raise ValueError(f"no rule layer for category {category}")


_LAYER_CATEGORY: dict[Layer, Category] = {
    Layer.RULE_ADMIN: Category.ADMIN,
    Layer.RULE_COMMUNICATION: Category.COMMUNICATION,
    Layer.RULE_ECONOMY: Category.ECONOMY,
    Layer.RULE_INFORMATION: Category.INFORMATION,
}


class MedianSupport(Enum):
    """Which values enter the median: only strictly positive ones, or all."""

    POSITIVE = "positive"
    ALL = "all"


class RuleLinkMode(Enum):
    """Rule-layer link rule: dummies match (High-High or Low-Low), or both High."""

    MATCH = "match"
    BOTH_HIGH = "both_high"


class DegenerateWindowError(ValueError):
    """Raised when a median split has an empty support."""


def median_split(
    values: Mapping[K, float],
    support: MedianSupport = MedianSupport.ALL,
) -> tuple[dict[K, bool], float]:
    """Dichotomize a value map at its median.

    The median is computed over the chosen support. A key is High (True) iff
    its value strictly exceeds the median; ties fall Low, and keys outside a
    POSITIVE support (zeros) are always Low. The split depends only on value
    ranks within the support.

    Returns:
        (high flags by key, median value).

    Raises:
        DegenerateWindowError: if the support is empty.
    """
    if not values:
        raise DegenerateWindowError("median_split over an empty value map")
    if support is MedianSupport.POSITIVE:
        pool = [v for v in values.values() if v > 0]
        if not pool:
            raise DegenerateWindowError("no positive values in support")
    else:
        pool = list(values.values())
    median = float(statistics.median(pool))
    return {key: value > median for key, value in values.items()}, median


@dataclass(frozen=True)
class LayerSnapshot:
    """One layer's link set over all dyads at one window.

    ``median`` records the split threshold for auditability (NaN when the
    window was degenerate and no split existed).
    """

    layer: Layer
    window: int
    links: frozenset[tuple[str, str]]
    universe: frozenset[str]
    median: float = math.nan
    degenerate: bool = False

    def __post_init__(self) -> None:
        for a, b in self.links:
            if a == b or a > b:
                raise ValueError(f"non-canonical dyad in links: {(a, b)!r}")
            if a not in self.universe or b not in self.universe:
                raise ValueError(f"dyad endpoint outside universe: {(a, b)!r}")


def shared_membership_weights(panel: PanelDataset, window: int) -> dict[tuple[str, str], int]:
    """Count users visiting both endpoints of each dyad within one window.

    Dyads with weight zero are omitted from the map (they are semantically
    zero). Weights are symmetric by construction of the canonical dyad.
    """
    if window not in panel.windows:
        raise ValueError(f"window {window} not in panel")
    servers_by_user: dict[str, list[str]] = defaultdict(list)
    for server in panel.servers:
        for user in panel.visitors_at(window, server):
            servers_by_user[user].append(server)
    weights: Counter[tuple[str, str]] = Counter()
    for servers in servers_by_user.values():
        if len(servers) < 2:
            continue
        servers.sort()
        for pair in combinations(servers, 2):
            weights[pair] += 1
    return dict(weights)


def build_traffic_layer(
    panel: PanelDataset,
    window: int,
    support: MedianSupport = MedianSupport.POSITIVE,
) -> LayerSnapshot:
    """Dichotomize shared-membership weights into the traffic layer.

    A window with no positive weight is degenerate: the snapshot carries an
    empty link set and ``degenerate=True`` so callers can surface a warning.
    """
    weights = shared_membership_weights(panel, window)
    universe = frozenset(panel.servers)
    try:
        flags, median = median_split(weights, support)
    except DegenerateWindowError:
        return LayerSnapshot(Layer.TRAFFIC, window, frozenset(), universe, degenerate=True)
    links = frozenset(pair for pair, high in flags.items() if high)
    return LayerSnapshot(Layer.TRAFFIC, window, links, universe, median=median)


def build_rule_dummies(
    panel: PanelDataset,
    window: int,
    category: Category,
) -> tuple[dict[str, bool], float]:
    """High/Low rule dummies for every server from a median split over all counts."""
    values = {s: float(panel.rule_count(window, s, category)) for s in panel.servers}
    return median_split(values, MedianSupport.ALL)


def build_rule_layer(
    dummies: Mapping[str, bool],
    window: int,
    category: Category,
    mode: RuleLinkMode = RuleLinkMode.MATCH,
    median: float = math.nan,
) -> LayerSnapshot:
    """Link dyads by dummy agreement (MATCH) or joint High status (BOTH_HIGH).

    In MATCH mode the link set is the union of the High clique and the Low
    clique, so |links| = C(|High|,2) + C(|Low|,2).
    """
    highs = sorted(s for s, high in dummies.items() if high)
    lows = sorted(s for s, high in dummies.items() if not high)
    links = set(combinations(highs, 2))
    if mode is RuleLinkMode.MATCH:
        links.update(combinations(lows, 2))
    return LayerSnapshot(
        Layer.for_category(category),
        window,
        frozenset(links),
        frozenset(dummies),
        median=median,
    )


def rule_layer_for_window(
    panel: PanelDataset,
    window: int,
    category: Category,
    mode: RuleLinkMode = RuleLinkMode.MATCH,
) -> LayerSnapshot:
    dummies, median = build_rule_dummies(panel, window, category)
    return build_rule_layer(dummies, window, category, mode, median=median)


def write_links_csv(snapshots: Iterable[LayerSnapshot], path: str | Path) -> None:
    """Serialize link sets as ``layer,window,server_a,server_b`` rows, sorted."""
    rows = [
        (snap.layer.value, snap.window, a, b)
        for snap in snapshots
        for a, b in snap.links
    ]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["layer", "window", "server_a", "server_b"])
        writer.writerows(sorted(rows))


def write_medians_csv(snapshots: Sequence[LayerSnapshot], path: str | Path) -> None:
    """Sidecar recording each window/layer's median (empty when degenerate)."""
    rows = sorted(
        (snap.layer.value, snap.window, "" if math.isnan(snap.median) else repr(snap.median))
        for snap in snapshots
    )
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["layer", "window", "median"])
        writer.writerows(rows)
