"""Command-line entry point: ingest, analyze, simulate, report subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .ingest import (
    build_panel,
    filter_servers,
    load_panel,
    parse_plugin_log,
    parse_visit_log,
    save_panel,
)
from .layers import MedianSupport, RuleLinkMode, write_links_csv, write_medians_csv
from .pipeline import DegenerateDataError, analyze_panel
from .report import (
    read_spillover_csv,
    render_figures,
    render_summary_text,
    sha256_file,
    write_json,
    write_spillover_csv,
    write_summary_json,
)
from .synth import CouplingParams, FabricationParams, fabricate_logs, generate_panel
from .taxonomy import hypothesis_report

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_DEGENERATE = 3


class InputError(ValueError):
    """Bad paths, malformed config, or inconsistent command-line input."""


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (InputError, ConfigError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except Exception:  # pragma: no cover - defensive catch-all
        traceback.print_exc()
        return EXIT_INTERNAL


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multispill",
        description=(
            "Detect directional spillover between co-evolving link layers of a "
            "temporal multiplex network built from community visit and rule logs."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser(
        "ingest", help="parse raw logs, filter servers, write a panel directory"
    )
    ingest.add_argument("--visits", required=True, help="visit log (CSV or JSON-lines)")
    ingest.add_argument("--plugins", required=True, help="plugin log (CSV)")
    ingest.add_argument("--format", choices=["csv", "jsonl"], default="csv",
                        help="visit log format (default csv)")
    ingest.add_argument("--config", help="config file (key = value sections)")
    ingest.add_argument("--out", required=True, help="output panel directory")
    ingest.set_defaults(handler=_cmd_ingest)

    analyze = sub.add_parser(
        "analyze", help="estimate spillover from a panel directory and write reports"
    )
    analyze.add_argument("--panel", required=True, help="panel directory from `ingest`")
    analyze.add_argument("--out", required=True, help="output report directory")
    analyze.add_argument("--config", help="config file (key = value sections)")
    analyze.add_argument("--ci-method", choices=["analytic", "bootstrap"], default=None,
                         help="confidence interval construction (default analytic)")
    analyze.add_argument("--level", type=float, default=None,
                         help="confidence level (default 0.99)")
    analyze.add_argument("--bootstrap-b", type=int, default=None,
                         help="bootstrap replicate count (default 500)")
    analyze.add_argument("--seed", type=int, default=None,
                         help="random seed for bootstrap resampling (default 0)")
    analyze.add_argument("--rule-link-mode", choices=["match", "both_high"], default=None,
                         help="rule-layer link rule (default match)")
    analyze.add_argument("--median-support", choices=["positive", "all"], default=None,
                         help="traffic median support (default positive)")
    analyze.add_argument("--workers", type=int, default=None,
                         help="worker threads; results are worker-count independent")
    analyze.add_argument("--write-layers", action="store_true",
                         help="also serialize per-window layer link sets")
    analyze.set_defaults(handler=_cmd_analyze)

    simulate = sub.add_parser(
        "simulate", help="generate synthetic panels with known coupling"
    )
    simulate.add_argument("--out", required=True, help="output directory")
    simulate.add_argument("--emit", choices=["sequences", "logs"], default="sequences",
                          help="native state sequences, or fabricated raw logs")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--n-dyads", type=int, default=2000, help="sequences mode only")
    simulate.add_argument("--n-windows", type=int, default=None,
                          help="default 18 (sequences) / 30 (logs)")
    simulate.add_argument("--rule-appear", type=float, default=0.1)
    simulate.add_argument("--rule-vanish", type=float, default=0.3)
    simulate.add_argument("--traffic-appear", type=float, default=None,
                          help="default 0.1 (sequences) / 0.05 (logs)")
    simulate.add_argument("--traffic-vanish", type=float, default=None,
                          help="default 0.3 (sequences) / 0.45 (logs)")
    simulate.add_argument("--beta-inst-to-cult", type=float, default=0.0)
    simulate.add_argument("--beta-cult-to-inst", type=float, default=0.0)
    simulate.add_argument("--n-servers", type=int, default=40, help="logs mode only")
    simulate.add_argument("--weeks-per-window", type=int, default=1, help="logs mode only")
    simulate.set_defaults(handler=_cmd_simulate)

    report = sub.add_parser(
        "report", help="render the text table and figures from an existing spillover CSV"
    )
    report.add_argument("--spillover", required=True, help="spillover.csv from `analyze`")
    report.add_argument("--manifest", help="manifest.json from the same run (for config echo)")
    report.add_argument("--out", required=True, help="output directory")
    report.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    report.set_defaults(handler=_cmd_report)

    return parser


def _require_file(raw: str, what: str) -> Path:
    path = Path(raw)
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    return path


def _load_config(args) -> RunConfig:
    config_path = getattr(args, "config", None)
    if config_path is not None:
        _require_file(config_path, "config file")
    return load_config(config_path)


def _cmd_ingest(args) -> int:
    visits_path = _require_file(args.visits, "visit log")
    plugins_path = _require_file(args.plugins, "plugin log")
    config = _load_config(args)

    events, visit_report = parse_visit_log(visits_path, fmt=args.format)
    plugins, plugin_report = parse_plugin_log(plugins_path, config.category_mapping)
    eligible, trace = filter_servers(events, plugins, config.criteria, config.window)
    if not eligible:
        raise DegenerateDataError("no servers pass the eligibility filters")
    panel = build_panel(events, plugins, eligible, config.window)

    out = Path(args.out)
    save_panel(panel, trace, out)
    with open(out / "parse_rejects.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["source", "line", "reason"])
        for line_no, reason in visit_report.rejects:
            writer.writerow(["visits", line_no, reason])
        for line_no, reason in plugin_report.rejects:
            writer.writerow(["plugins", line_no, reason])

    manifest = {
        "command": "ingest",
        "version": __version__,
        "config": config.as_dict(),
        "inputs": {
            "visits": sha256_file(visits_path),
            "plugins": sha256_file(plugins_path),
        },
        "visit_rows": visit_report.rows,
        "visit_rejects": visit_report.reject_count,
        "plugin_rows": plugin_report.rows,
        "plugin_rejects": plugin_report.reject_count,
        "unknown_categories": plugin_report.unknown_categories,
        "eligible_servers": len(panel.servers),
        "windows": len(panel.windows),
        "warnings": list(panel.warnings),
    }
    write_json(manifest, out / "manifest.json")
    print(
        f"ingested {visit_report.rows} visit rows ({visit_report.reject_count} rejected), "
        f"{plugin_report.rows} plugin rows ({plugin_report.reject_count} rejected); "
        f"{len(panel.servers)} eligible servers over {len(panel.windows)} windows -> {out}"
    )
    return EXIT_OK


def _cmd_analyze(args) -> int:
    panel_dir = Path(args.panel)
    if not panel_dir.is_dir():
        raise InputError(f"panel directory not found: {panel_dir}")
    config = _load_config(args)
    config = apply_overrides(
        config,
        ci_method=args.ci_method,
        level=args.level,
        bootstrap_replicates=args.bootstrap_b,
        seed=args.seed,
        rule_link_mode=None if args.rule_link_mode is None else RuleLinkMode(args.rule_link_mode),
        traffic_median_support=(
            None if args.median_support is None else MedianSupport(args.median_support)
        ),
        workers=args.workers,
    )

    panel = load_panel(panel_dir)
    result = analyze_panel(panel, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_spillover_csv(result.estimates, out / "spillover.csv")
    for summary in result.summaries:
        write_summary_json(summary, out / f"hypotheses_{summary.rule_category.value.lower()}.json")
    with open(out / "summary.txt", "w", encoding="utf-8") as handle:
        handle.write(render_summary_text(result.summaries))

    all_snapshots = [snap for snaps in result.snapshots.values() for snap in snaps]
    write_medians_csv(all_snapshots, out / "medians.csv")
    if args.write_layers:
        write_links_csv(all_snapshots, out / "layers.csv")

    manifest = {
        "command": "analyze",
        "version": __version__,
        "config": config.as_dict(),
        "inputs": {
            name: sha256_file(panel_dir / name)
            for name in ("visitors.csv", "rule_counts.csv")
        },
        "warnings": list(result.warnings),
        "outputs": sorted(p.name for p in out.iterdir() if p.is_file()),
    }
    write_json(manifest, out / "manifest.json")
    print(f"analyzed {len(panel.servers)} servers x {len(panel.windows)} windows -> {out}")
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"command": "simulate", "version": __version__, "seed": args.seed}

    if args.emit == "sequences":
        params = CouplingParams(
            n_dyads=args.n_dyads,
            n_windows=18 if args.n_windows is None else args.n_windows,
            rule_appear=args.rule_appear,
            rule_vanish=args.rule_vanish,
            traffic_appear=0.1 if args.traffic_appear is None else args.traffic_appear,
            traffic_vanish=0.3 if args.traffic_vanish is None else args.traffic_vanish,
            beta_inst_to_cult=args.beta_inst_to_cult,
            beta_cult_to_inst=args.beta_cult_to_inst,
            seed=args.seed,
        )
        sequences = generate_panel(params)
        with open(out / "sequences.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["dyad", "window", "rule", "traffic"])
            for seq in sequences:
                for window, state in enumerate(seq.states):
                    writer.writerow([seq.dyad, window, state >> 1, state & 1])
        manifest["params"] = {
            "n_dyads": params.n_dyads,
            "n_windows": params.n_windows,
            "rule_appear": params.rule_appear,
            "rule_vanish": params.rule_vanish,
            "traffic_appear": params.traffic_appear,
            "traffic_vanish": params.traffic_vanish,
            "beta_inst_to_cult": params.beta_inst_to_cult,
            "beta_cult_to_inst": params.beta_cult_to_inst,
        }
        made = "sequences.csv"
    else:
        params = FabricationParams(
            n_servers=args.n_servers,
            n_windows=30 if args.n_windows is None else args.n_windows,
            weeks_per_window=args.weeks_per_window,
            traffic_appear=0.05 if args.traffic_appear is None else args.traffic_appear,
            traffic_vanish=0.45 if args.traffic_vanish is None else args.traffic_vanish,
            beta_inst_to_cult=args.beta_inst_to_cult,
            beta_cult_to_inst=args.beta_cult_to_inst,
            seed=args.seed,
        )
        logs = fabricate_logs(params)
        with open(out / "visits.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["user_id", "server_id", "timestamp"])
            writer.writerows(logs.visits)
        with open(out / "plugins.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["server_id", "plugin_id", "category", "week"])
            writer.writerows(logs.plugins)
        with open(out / "config.ini", "w", encoding="utf-8") as handle:
            handle.write(logs.config_text)
        manifest["params"] = {
            "n_servers": params.n_servers,
            "n_windows": params.n_windows,
            "weeks_per_window": params.weeks_per_window,
            "category": params.category.value,
            "traffic_appear": params.traffic_appear,
            "traffic_vanish": params.traffic_vanish,
            "dummy_appear": params.dummy_appear,
            "dummy_vanish": params.dummy_vanish,
            "beta_inst_to_cult": params.beta_inst_to_cult,
            "beta_cult_to_inst": params.beta_cult_to_inst,
        }
        made = "visits.csv, plugins.csv, config.ini"
    write_json(manifest, out / "manifest.json")
    print(f"simulated ({args.emit}) with seed {args.seed} -> {out} ({made})")
    return EXIT_OK


def _cmd_report(args) -> int:
    spillover_path = _require_file(args.spillover, "spillover CSV")
    estimates = read_spillover_csv(spillover_path)
    if not estimates:
        raise DegenerateDataError("spillover CSV contains no estimates")

    rule_link_mode = "unknown"
    level = float("nan")
    if args.manifest:
        manifest_path = _require_file(args.manifest, "manifest")
        with open(manifest_path, encoding="utf-8") as handle:
            run_config = json.load(handle).get("config", {})
        rule_link_mode = run_config.get("rule_link_mode", "unknown")
        level = float(run_config.get("level", "nan"))
    methods = {est.method for ests in estimates.values() for est in ests}
    ci_method = methods.pop() if len(methods) == 1 else "mixed"

    summaries = hypothesis_report(estimates, rule_link_mode, ci_method, level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = render_summary_text(summaries)
    with open(out / "summary.txt", "w", encoding="utf-8") as handle:
        handle.write(text)
    print(text, end="")
    if not args.no_figures:
        for path in render_figures(estimates, out):
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
