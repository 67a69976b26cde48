"""Spillover report serialization and rendering: CSV, text table, figures."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .ingest import Category
from .markov import SpilloverEstimate, state_index
from .taxonomy import CODED_TRANSITIONS, HypothesisSummary, classify

__all__ = [
    "write_spillover_csv",
    "read_spillover_csv",
    "format_estimate",
    "render_summary_text",
    "write_summary_json",
    "render_figures",
    "write_json",
    "sha256_file",
]

_COLUMNS = [
    "rule_category",
    "from_state",
    "to_state",
    "p_obs",
    "p_null",
    "diff",
    "ci_lo",
    "ci_hi",
    "n_from",
    "significant",
    "method",
]


def _cell(value: float) -> str:
    return "" if math.isnan(value) else repr(value)


def write_spillover_csv(
    estimates_by_category: Mapping[Category, Sequence[SpilloverEstimate]],
    path: str | Path,
) -> None:
    """One row per transition per rule category; Undefined cells left empty."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for category in sorted(estimates_by_category, key=lambda c: c.value):
            for est in estimates_by_category[category]:
                writer.writerow(
                    [
                        category.value,
                        est.from_label,
                        est.to_label,
                        _cell(est.p_obs),
                        _cell(est.p_null),
                        _cell(est.diff),
                        _cell(est.ci_lo),
                        _cell(est.ci_hi),
                        est.n_from,
                        "" if not est.defined else str(est.significant).lower(),
                        est.method,
                    ]
                )


def read_spillover_csv(path: str | Path) -> dict[Category, list[SpilloverEstimate]]:
    """Inverse of :func:`write_spillover_csv`; level is not stored in the CSV."""
    out: dict[Category, list[SpilloverEstimate]] = {}

    def num(raw: str) -> float:
        return float(raw) if raw else math.nan

    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != _COLUMNS:
            raise ValueError(f"unexpected spillover CSV columns: {reader.fieldnames}")
        for row in reader:
            est = SpilloverEstimate(
                from_state=state_index(row["from_state"]),
                to_state=state_index(row["to_state"]),
                p_obs=num(row["p_obs"]),
                p_null=num(row["p_null"]),
                diff=num(row["diff"]),
                ci_lo=num(row["ci_lo"]),
                ci_hi=num(row["ci_hi"]),
                n_from=int(row["n_from"]),
                level=math.nan,
                method=row["method"],
            )
            out.setdefault(Category(row["rule_category"]), []).append(est)
    return out


def _fmt(value: float) -> str:
    return "n/a" if math.isnan(value) else format(value, ".4g")


def format_estimate(code: str, est: SpilloverEstimate) -> str:
    """Render one estimate the way the headline results are quoted."""
    return f"{code}_diff = {_fmt(est.diff)} [{_fmt(est.ci_lo)}, {_fmt(est.ci_hi)}]"


def _transition_code(est: SpilloverEstimate) -> str:
    label = classify(est.from_state, est.to_state)
    if label.code == "X":
        return f"X({est.from_label}->{est.to_label})"
    return label.code


def render_summary_text(summaries: Sequence[HypothesisSummary]) -> str:
    """Plain-text panel per rule category: directional effects plus fast context."""
    lines: list[str] = []
    if summaries:
        head = summaries[0]
        lines.append(
            "Spillover summary "
            f"(rule_link_mode={head.rule_link_mode}, ci_method={head.ci_method}, "
            f"level={_fmt(head.level)})"
        )
        lines.append("=" * len(lines[0]))
    for summary in summaries:
        lines.append("")
        lines.append(summary.rule_category.value)
        lines.append("-" * len(summary.rule_category.value))
        for evidence in (summary.institution_to_culture, summary.culture_to_institution):
            arrow = (
                "institution -> culture"
                if evidence.direction.value == "institution_to_culture"
                else "culture -> institution"
            )
            lines.append(f"  {arrow:<24} {evidence.verdict}")
            if evidence.gain is not None:
                lines.append(f"    gain  {format_estimate(evidence.gain_code, evidence.gain)}")
            if evidence.loss is not None:
                corroboration = {True: "corroborates", False: "does not corroborate", None: "unavailable"}[
                    evidence.corroborated
                ]
                lines.append(
                    f"    loss  {format_estimate(evidence.loss_code, evidence.loss)}"
                    f"  ({corroboration})"
                )
        lines.append(f"  {'fast co-transition':<24} {summary.fast.co_transition}")
        if summary.fast.gain is not None:
            lines.append(f"    gain  {format_estimate('F1.1', summary.fast.gain)}")
        if summary.fast.loss is not None:
            lines.append(f"    loss  {format_estimate('F1.2', summary.fast.loss)}")
    lines.append("")
    return "\n".join(lines)


def write_summary_json(summary: HypothesisSummary, path: str | Path) -> None:
    write_json(summary.to_json_dict(), path)


def write_json(payload: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def render_figures(
    estimates_by_category: Mapping[Category, Sequence[SpilloverEstimate]],
    out_dir: str | Path,
    dpi: int = 150,
) -> list[Path]:
    """Render observed-minus-null charts with CIs to PNG files.

    One figure per rule category covering all 16 transitions, plus an overview
    grid restricted to the six coded transitions.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    categories = sorted(estimates_by_category, key=lambda c: c.value)

    for category in categories:
        estimates = estimates_by_category[category]
        fig, ax = plt.subplots(figsize=(11, 4.5))
        _plot_estimates(ax, estimates, coded_only=False)
        ax.set_title(f"{category.value} rules x traffic: observed - null transition probability")
        fig.tight_layout()
        target = out / f"spillover_{category.value.lower()}.png"
        fig.savefig(target, dpi=dpi)
        plt.close(fig)
        written.append(target)

    fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharey=True)
    for ax, category in zip(axes.ravel(), categories):
        _plot_estimates(ax, estimates_by_category[category], coded_only=True)
        ax.set_title(category.value)
    for ax in axes.ravel()[len(categories) :]:
        ax.set_visible(False)
    fig.suptitle("Coded transitions: observed - null with confidence intervals")
    fig.tight_layout()
    target = out / "spillover_overview.png"
    fig.savefig(target, dpi=dpi)
    plt.close(fig)
    written.append(target)
    return written


def _plot_estimates(ax, estimates: Sequence[SpilloverEstimate], coded_only: bool) -> None:
    chosen = [
        est
        for est in estimates
        if not coded_only or (est.from_state, est.to_state) in CODED_TRANSITIONS
    ]
    labels = [_transition_code(est) for est in chosen]
    xs = range(len(chosen))
    ax.axhline(0.0, color="0.6", linewidth=0.8)
    for x, est in zip(xs, chosen):
        if not est.defined:
            continue
        color = "tab:red" if est.significant else "tab:blue"
        err_lo = est.diff - est.ci_lo
        err_hi = est.ci_hi - est.diff
        if math.isnan(err_lo) or math.isnan(err_hi):
            ax.plot([x], [est.diff], "o", color=color, markersize=4)
        else:
            ax.errorbar(
                [x],
                [est.diff],
                yerr=[[err_lo], [err_hi]],
                fmt="o",
                color=color,
                markersize=4,
                capsize=3,
            )
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("observed - null")
