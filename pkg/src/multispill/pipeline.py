"""End-to-end wiring from a panel to spillover estimates and hypothesis summaries."""

from __future__ import annotations

from dataclasses import dataclass

from .config import RunConfig
from .ingest import GOVERNANCE_CATEGORIES, Category, PanelDataset
from .layers import Layer, LayerSnapshot, build_traffic_layer, rule_layer_for_window
from .markov import (
    SpilloverEstimate,
    count_transitions,
    encode_sequences,
    spillover_analytic,
    spillover_bootstrap,
)
from .taxonomy import HypothesisSummary, hypothesis_report

__all__ = ["DegenerateDataError", "AnalysisResult", "build_layers", "analyze_panel"]


class DegenerateDataError(ValueError):
    """The panel cannot support the analysis (too few servers or windows)."""


@dataclass(frozen=True)
class AnalysisResult:
    estimates: dict[Category, list[SpilloverEstimate]]
    summaries: list[HypothesisSummary]
    snapshots: dict[Layer, list[LayerSnapshot]]
    warnings: tuple[str, ...]


def build_layers(panel: PanelDataset, config: RunConfig) -> dict[Layer, list[LayerSnapshot]]:
    """All five layers for every panel window."""
    snapshots: dict[Layer, list[LayerSnapshot]] = {
        Layer.TRAFFIC: [
            build_traffic_layer(panel, w, config.traffic_median_support)
            for w in panel.windows
        ]
    }
    for category in GOVERNANCE_CATEGORIES:
        snapshots[Layer.for_category(category)] = [
            rule_layer_for_window(panel, w, category, config.rule_link_mode)
            for w in panel.windows
        ]
    return snapshots


def analyze_panel(panel: PanelDataset, config: RunConfig) -> AnalysisResult:
    """Estimate spillover for each (rule layer, traffic layer) pair.

    Raises:
        DegenerateDataError: fewer than two servers or two windows.
    """
    if len(panel.servers) < 2:
        raise DegenerateDataError("panel has fewer than two servers")
    if len(panel.windows) < 2:
        raise DegenerateDataError("panel has fewer than two windows")

    warnings = list(panel.warnings)
    snapshots = build_layers(panel, config)
    for snap in snapshots[Layer.TRAFFIC]:
        if snap.degenerate:
            warnings.append(f"traffic layer degenerate at window {snap.window} (no positive weights)")

    estimates: dict[Category, list[SpilloverEstimate]] = {}
    for category in GOVERNANCE_CATEGORIES:
        sequences = encode_sequences(
            snapshots[Layer.for_category(category)],
            snapshots[Layer.TRAFFIC],
            panel.windows,
        )
        if config.ci_method == "bootstrap":
            ests = spillover_bootstrap(
                sequences,
                b=config.bootstrap_replicates,
                seed=config.seed,
                level=config.level,
                workers=config.workers,
            )
        else:
            ests = spillover_analytic(count_transitions(sequences), level=config.level)
        estimates[category] = ests
        undefined = sorted({est.from_label for est in ests if not est.defined})
        if undefined:
            warnings.append(
                f"{category.value}: transitions out of never-occupied state(s) "
                f"{', '.join(undefined)} are Undefined"
            )

    summaries = hypothesis_report(
        estimates,
        rule_link_mode=config.rule_link_mode.value,
        ci_method=config.ci_method,
        level=config.level,
    )
    return AnalysisResult(estimates, summaries, snapshots, tuple(warnings))
