"""Run configuration: paper-matched defaults, config file parsing, flag overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path

from .ingest import DEFAULT_CATEGORY_MAPPING, Category, FilterCriteria, WindowSpec
from .layers import MedianSupport, RuleLinkMode

__all__ = ["ConfigError", "RunConfig", "load_config", "apply_overrides"]


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration for a pipeline run.

    Defaults follow the source study: 4-week windows over study weeks 5-22,
    servers live in at least 16 distinct weeks, 4-week minimum survival,
    positive-support traffic median, dummy-match rule links, analytic 99%
    intervals. Flags override the config file; the config file overrides
    these defaults.
    """

    window: WindowSpec = WindowSpec()
    criteria: FilterCriteria = FilterCriteria()
    category_mapping: dict[str, Category] = field(
        default_factory=lambda: dict(DEFAULT_CATEGORY_MAPPING)
    )
    rule_link_mode: RuleLinkMode = RuleLinkMode.MATCH
    traffic_median_support: MedianSupport = MedianSupport.POSITIVE
    ci_method: str = "analytic"
    level: float = 0.99
    bootstrap_replicates: int = 500
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.ci_method not in ("analytic", "bootstrap"):
            raise ConfigError(f"ci_method must be analytic or bootstrap, got {self.ci_method!r}")
        if not 0 < self.level < 1:
            raise ConfigError("level must be in (0, 1)")
        if self.bootstrap_replicates < 100:
            raise ConfigError("bootstrap_replicates must be >= 100")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def as_dict(self) -> dict:
        """Flat mapping for manifests; every value re-creates the run."""
        return {
            "study_start_week": self.window.study_start_week,
            "study_end_week": self.window.study_end_week,
            "weeks_per_window": self.window.weeks_per_window,
            "week_epoch": self.window.week_epoch.isoformat(),
            "min_live_weeks": self.criteria.min_live_weeks,
            "require_governance_info": self.criteria.require_governance_info,
            "min_survival_weeks": self.criteria.min_survival_weeks,
            "category_mapping": {k: v.value for k, v in sorted(self.category_mapping.items())},
            "rule_link_mode": self.rule_link_mode.value,
            "traffic_median_support": self.traffic_median_support.value,
            "ci_method": self.ci_method,
            "level": self.level,
            "bootstrap_replicates": self.bootstrap_replicates,
            "seed": self.seed,
            "workers": self.workers,
        }


_SECTIONS = {
    "window": {"study_start_week", "study_end_week", "weeks_per_window", "week_epoch"},
    "filters": {"min_live_weeks", "require_governance_info", "min_survival_weeks"},
    "layers": {"rule_link_mode", "traffic_median_support"},
    "analysis": {"ci_method", "level", "bootstrap_replicates", "seed", "workers"},
    "categories": None,  # free-form raw-string -> category mapping
}


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw!r}")


def load_config(path: str | Path | None) -> RunConfig:
    """Load a plain-text ``key = value`` sectioned config file.

    Missing file path (None) yields the documented defaults. Unknown sections
    or keys are rejected so a typo cannot silently fall back to a default.
    """
    config = RunConfig()
    if path is None:
        return config

    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        known = _SECTIONS[section]
        if known is not None:
            unknown = set(parser[section]) - known
            if unknown:
                raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")

    def get(section: str, key: str, cast, default):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return cast(raw)
            except ConfigError:
                raise
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"invalid value for {section}.{key}: {raw!r}") from exc
        return default

    window = WindowSpec(
        study_start_week=get("window", "study_start_week", int, config.window.study_start_week),
        study_end_week=get("window", "study_end_week", int, config.window.study_end_week),
        weeks_per_window=get("window", "weeks_per_window", int, config.window.weeks_per_window),
        week_epoch=get("window", "week_epoch", date.fromisoformat, config.window.week_epoch),
    )
    criteria = FilterCriteria(
        min_live_weeks=get("filters", "min_live_weeks", int, config.criteria.min_live_weeks),
        require_governance_info=get(
            "filters",
            "require_governance_info",
            lambda raw: _parse_bool(raw, "require_governance_info"),
            config.criteria.require_governance_info,
        ),
        min_survival_weeks=get(
            "filters", "min_survival_weeks", int, config.criteria.min_survival_weeks
        ),
    )

    mapping = dict(DEFAULT_CATEGORY_MAPPING)
    if parser.has_section("categories"):
        for raw_key, raw_value in parser["categories"].items():
            try:
                mapping[raw_key.strip().lower()] = Category(raw_value.strip())
            except ValueError:
                raise ConfigError(
                    f"category mapping target must be one of "
                    f"{[c.value for c in Category]}, got {raw_value!r}"
                ) from None

    return RunConfig(
        window=window,
        criteria=criteria,
        category_mapping=mapping,
        rule_link_mode=get(
            "layers", "rule_link_mode", RuleLinkMode, config.rule_link_mode
        ),
        traffic_median_support=get(
            "layers", "traffic_median_support", MedianSupport, config.traffic_median_support
        ),
        ci_method=get("analysis", "ci_method", str, config.ci_method),
        level=get("analysis", "level", float, config.level),
        bootstrap_replicates=get(
            "analysis", "bootstrap_replicates", int, config.bootstrap_replicates
        ),
        seed=get("analysis", "seed", int, config.seed),
        workers=get("analysis", "workers", int, config.workers),
    )


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Replace config fields with non-None override values (CLI flags)."""
    updates = {key: value for key, value in overrides.items() if value is not None}
    return replace(config, **updates) if updates else config
