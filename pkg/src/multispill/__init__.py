"""Spillover detection between co-evolving link layers of a temporal multiplex network."""

__version__ = "0.1.0"

from .ingest import (
    Category,
    FilterCriteria,
    FilterTrace,
    PanelDataset,
    PluginObservation,
    VisitEvent,
    WindowSpec,
    build_panel,
    filter_servers,
    parse_plugin_log,
    parse_visit_log,
)
from .layers import (
    Layer,
    LayerSnapshot,
    MedianSupport,
    RuleLinkMode,
    build_rule_dummies,
    build_rule_layer,
    build_traffic_layer,
    dyad,
    median_split,
    shared_membership_weights,
)
from .markov import (
    MarginalChain,
    SpilloverEstimate,
    StateSequence,
    TransitionTable,
    count_transitions,
    encode_sequences,
    marginal_chains,
    null_matrix,
    observed_matrix,
    spillover_analytic,
    spillover_bootstrap,
)
from .synth import CouplingParams, calibration_run, generate_panel
from .taxonomy import Direction, Timescale, TransitionLabel, classify, hypothesis_report

__all__ = [
    "Category",
    "CouplingParams",
    "Direction",
    "FilterCriteria",
    "FilterTrace",
    "Layer",
    "LayerSnapshot",
    "MarginalChain",
    "MedianSupport",
    "PanelDataset",
    "PluginObservation",
    "RuleLinkMode",
    "SpilloverEstimate",
    "StateSequence",
    "Timescale",
    "TransitionLabel",
    "TransitionTable",
    "VisitEvent",
    "WindowSpec",
    "build_panel",
    "build_rule_dummies",
    "build_rule_layer",
    "build_traffic_layer",
    "calibration_run",
    "classify",
    "count_transitions",
    "dyad",
    "encode_sequences",
    "filter_servers",
    "generate_panel",
    "hypothesis_report",
    "marginal_chains",
    "median_split",
    "null_matrix",
    "observed_matrix",
    "parse_plugin_log",
    "parse_visit_log",
    "shared_membership_weights",
    "spillover_analytic",
    "spillover_bootstrap",
]
