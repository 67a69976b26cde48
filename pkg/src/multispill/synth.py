"""Synthetic two-layer dyad panels with known, injectable cross-layer coupling.

Two generators live here. ``generate_panel`` evolves each dyad as a pair of
coupled 2-state chains and is the ground-truth oracle for the detector.
``fabricate_logs`` emits raw visit/plugin logs for end-to-end pipeline tests;
per-dyad chains are not realizable as a consistent graph plus per-server
dummies, so fabrication runs a server-level process that induces coupling in
the requested direction instead.
"""

from __future__ import annotations

import configparser
import io
import warnings
from dataclasses import dataclass, replace
from datetime import date, timedelta
from itertools import combinations

import numpy as np

from .ingest import Category, GOVERNANCE_CATEGORIES
from .markov import (
    N_STATES,
    StateSequence,
    count_transitions,
    spillover_analytic,
    spillover_bootstrap,
)

__all__ = [
    "CouplingParams",
    "generate_panel",
    "CalibrationCell",
    "CalibrationResult",
    "calibration_run",
    "FabricationParams",
    "FabricatedLogs",
    "fabricate_logs",
]


@dataclass(frozen=True)
class CouplingParams:
    """Baseline per-step link dynamics plus additive cross-layer coupling.

    ``beta_inst_to_cult`` shifts the traffic appearance probability when the
    rule link is currently present; ``beta_cult_to_inst`` shifts the rule
    appearance probability when the traffic link is currently present.
    Shifted probabilities are clamped to [0, 1] with a warning.
    """

    n_dyads: int
    n_windows: int
    rule_appear: float
    rule_vanish: float
    traffic_appear: float
    traffic_vanish: float
    beta_inst_to_cult: float = 0.0
    beta_cult_to_inst: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_dyads < 1:
            raise ValueError("n_dyads must be >= 1")
        if self.n_windows < 2:
            raise ValueError("n_windows must be >= 2")
        for name in ("rule_appear", "rule_vanish", "traffic_appear", "traffic_vanish"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


def _stationary(appear: float, vanish: float) -> float:
    total = appear + vanish
    return appear / total if total > 0 else 0.0


def _shifted(base: float, beta: float, what: str) -> float:
    shifted = base + beta
    if not 0.0 <= shifted <= 1.0:
        warnings.warn(
            f"{what} {shifted:.4g} clamped to [0, 1]; the injected coupling saturates",
            stacklevel=3,
        )
        return min(1.0, max(0.0, shifted))
    return shifted


def generate_panel(params: CouplingParams) -> list[StateSequence]:
    """Simulate every dyad's coupled two-layer chain.

    Initial layer states are drawn from each layer's baseline stationary
    distribution; both layers then update synchronously, each appearance
    probability shifted by its beta when the other layer's link is currently
    present. Deterministic for a fixed seed.
    """
    n, w = params.n_dyads, params.n_windows
    rng = np.random.default_rng(params.seed)

    rule_on_coupled = _shifted(
        params.rule_appear, params.beta_cult_to_inst, "rule appearance probability"
    )
    traffic_on_coupled = _shifted(
        params.traffic_appear, params.beta_inst_to_cult, "traffic appearance probability"
    )

    states = np.empty((n, w), dtype=np.uint8)
    rule = rng.random(n) < _stationary(params.rule_appear, params.rule_vanish)
    traffic = rng.random(n) < _stationary(params.traffic_appear, params.traffic_vanish)
    states[:, 0] = 2 * rule + traffic
    for col in range(1, w):
        rule_appear = np.where(traffic, rule_on_coupled, params.rule_appear)
        traffic_appear = np.where(rule, traffic_on_coupled, params.traffic_appear)
        draw_rule = rng.random(n)
        draw_traffic = rng.random(n)
        rule_next = np.where(rule, draw_rule >= params.rule_vanish, draw_rule < rule_appear)
        traffic_next = np.where(
            traffic, draw_traffic >= params.traffic_vanish, draw_traffic < traffic_appear
        )
        rule, traffic = rule_next, traffic_next
        states[:, col] = 2 * rule + traffic

    return [StateSequence(f"d{i:06d}", states[i]) for i in range(n)]


@dataclass(frozen=True)
class CalibrationCell:
    from_state: int
    to_state: int
    n_defined: int
    n_flagged: int

    @property
    def false_positive_rate(self) -> float:
        return self.n_flagged / self.n_defined if self.n_defined else float("nan")


@dataclass(frozen=True)
class CalibrationResult:
    method: str
    level: float
    replicates: int
    cells: tuple[CalibrationCell, ...]


def calibration_run(
    params: CouplingParams,
    replicates: int,
    level: float = 0.99,
    method: str = "analytic",
    bootstrap_b: int = 500,
    workers: int = 1,
) -> CalibrationResult:
    """Generate-and-detect under the exact null; report per-transition FPR.

    Requires both betas zero so layers are independent by construction. Each
    replicate's panel and bootstrap seeds derive deterministically from
    ``params.seed``. Undefined estimates are excluded from FPR denominators.
    """
    if params.beta_inst_to_cult != 0.0 or params.beta_cult_to_inst != 0.0:
        raise ValueError("calibration_run requires both betas to be zero")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if method not in ("analytic", "bootstrap"):
        raise ValueError(f"unknown CI method {method!r}")

    words = np.random.SeedSequence(params.seed).generate_state(2 * replicates, dtype=np.uint64)
    defined = np.zeros(16, dtype=np.int64)
    flagged = np.zeros(16, dtype=np.int64)
    for i in range(replicates):
        rep = replace(params, seed=int(words[2 * i]))
        sequences = generate_panel(rep)
        if method == "analytic":
            estimates = spillover_analytic(count_transitions(sequences), level=level)
        else:
            estimates = spillover_bootstrap(
                sequences, b=bootstrap_b, seed=int(words[2 * i + 1]), level=level, workers=workers
            )
        for est in estimates:
            cell = 4 * est.from_state + est.to_state
            if est.defined:
                defined[cell] += 1
                if est.significant:
                    flagged[cell] += 1

    cells = tuple(
        CalibrationCell(s, s2, int(defined[4 * s + s2]), int(flagged[4 * s + s2]))
        for s in range(N_STATES)
        for s2 in range(N_STATES)
    )
    return CalibrationResult(method, level, replicates, cells)


@dataclass(frozen=True)
class FabricationParams:
    """Server-level generative model behind fabricated raw logs.

    Per-dyad joint chains cannot be realized as a graph plus per-server
    dummies, so fabrication evolves servers and dyads directly. Rule dummies
    follow independent per-server flip chains (``dummy_appear``/``dummy_vanish``)
    hard-capped at half the servers High, which keeps the all-values median
    split realizable. Traffic weights evolve per dyad with the stated
    baselines. ``beta_inst_to_cult`` raises a dyad's traffic appearance when
    its endpoints' dummies currently match; ``beta_cult_to_inst`` is a
    per-dyad contagion rate at which a high-traffic High/Low pair promotes its
    Low endpoint, creating rule matches preferentially where traffic exists.
    """

    n_servers: int = 40
    n_windows: int = 30
    weeks_per_window: int = 1
    category: Category = Category.ADMIN
    traffic_appear: float = 0.05
    traffic_vanish: float = 0.45
    dummy_appear: float = 0.08
    dummy_vanish: float = 0.12
    beta_inst_to_cult: float = 0.0
    beta_cult_to_inst: float = 0.0
    seed: int = 0
    week_epoch: date = date(2016, 1, 4)

    def __post_init__(self) -> None:
        if self.n_servers < 4 or self.n_servers % 2:
            raise ValueError("n_servers must be an even number >= 4")
        if self.n_windows < 2:
            raise ValueError("n_windows must be >= 2")
        if self.weeks_per_window < 1:
            raise ValueError("weeks_per_window must be >= 1")
        if self.category not in GOVERNANCE_CATEGORIES:
            raise ValueError("category must be a governance category")
        for name in ("traffic_appear", "traffic_vanish", "dummy_appear", "dummy_vanish"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class FabricatedLogs:
    """Raw rows ready to serialize, plus a config matching the fabricated span."""

    visits: tuple[tuple[str, str, str], ...]  # user_id, server_id, rfc3339 timestamp
    plugins: tuple[tuple[str, str, str, int], ...]  # server_id, plugin_id, category, week
    config_text: str
    n_windows: int
    servers: tuple[str, ...]


# Rule counts realizing a Low/High dummy under an all-values median split, and
# shared-visitor weights realizing a Low/High traffic dyad under a positive
# median split. Both splits stay faithful as long as High items never
# outnumber Low items, which _cap_true enforces.
_COUNT_LOW, _COUNT_HIGH = 1, 9
_WEIGHT_LOW, _WEIGHT_HIGH = 1, 3


def _cap_true(flags: np.ndarray, cap: int, rng: np.random.Generator) -> None:
    """Demote uniformly random True entries in place until at most ``cap`` remain."""
    excess = int(flags.sum()) - cap
    if excess > 0:
        ons = np.flatnonzero(flags)
        flags[rng.choice(ons, size=excess, replace=False)] = False


def fabricate_logs(params: FabricationParams) -> FabricatedLogs:
    """Emit visit and plugin logs that round-trip through ingest and netbuild.

    Every server gets one dedicated keep-alive visitor per week, so eligibility
    filters pass untouched; dyad weights are realized by per-window users who
    visit exactly the dyad's two endpoints. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(params.seed)
    n = params.n_servers
    servers = tuple(f"s{i:03d}" for i in range(n))
    dyads = list(combinations(range(n), 2))
    m = len(dyads)
    endpoint_a = np.array([a for a, _ in dyads])
    endpoint_b = np.array([b for _, b in dyads])

    high = rng.random(n) < _stationary(params.dummy_appear, params.dummy_vanish)
    _cap_true(high, n // 2, rng)
    traffic = rng.random(m) < _stationary(params.traffic_appear, params.traffic_vanish)
    _cap_true(traffic, m // 2, rng)
    traffic_on_coupled = _shifted(
        params.traffic_appear, params.beta_inst_to_cult, "traffic appearance probability"
    )

    dummy_frames = []
    traffic_frames = []
    for _ in range(params.n_windows):
        dummy_frames.append(high.copy())
        traffic_frames.append(traffic.copy())

        matched = high[endpoint_a] == high[endpoint_b]

        # Dummy update: per-server baseline flips plus traffic-driven contagion.
        # A Low server's promotion chance rises with each mismatched
        # high-traffic dyad touching it, so rule matches appear preferentially
        # where traffic already exists.
        pressure = np.zeros(n, dtype=np.int64)
        if params.beta_cult_to_inst > 0:
            boosted = traffic & ~matched
            low_a = ~high[endpoint_a]
            np.add.at(pressure, endpoint_a[boosted & low_a], 1)
            np.add.at(pressure, endpoint_b[boosted & ~low_a], 1)
        p_up = 1.0 - (1.0 - params.dummy_appear) * (1.0 - params.beta_cult_to_inst) ** pressure
        draw = rng.random(n)
        next_high = np.where(high, draw >= params.dummy_vanish, draw < p_up)
        # More Highs than Lows would flip the median split; demote extras.
        _cap_true(next_high, n // 2, rng)

        # Traffic update: appearance biased where dummies currently match.
        appear = np.where(matched, traffic_on_coupled, params.traffic_appear)
        draw = rng.random(m)
        traffic = np.where(traffic, draw >= params.traffic_vanish, draw < appear)
        _cap_true(traffic, m // 2, rng)
        high = next_high

    visits: list[tuple[str, str, str]] = []
    plugins: list[tuple[str, str, str, int]] = []
    wpw = params.weeks_per_window
    for w in range(params.n_windows):
        first_week = w * wpw
        for week in range(first_week, first_week + wpw):
            stamp = _week_timestamp(params.week_epoch, week)
            for server in servers:
                visits.append((f"live_{server}", server, stamp))
        stamp = _week_timestamp(params.week_epoch, first_week)
        for d, (a, b) in enumerate(dyads):
            weight = _WEIGHT_HIGH if traffic_frames[w][d] else _WEIGHT_LOW
            for k in range(weight):
                user = f"w{w:02d}_d{d:04d}_{k}"
                visits.append((user, servers[a], stamp))
                visits.append((user, servers[b], stamp))
        for i, server in enumerate(servers):
            count = _COUNT_HIGH if dummy_frames[w][i] else _COUNT_LOW
            raw = params.category.value.lower()
            for k in range(count):
                plugins.append((server, f"{raw}p{k:02d}", raw, first_week))
            for other in GOVERNANCE_CATEGORIES:
                if other is params.category:
                    continue
                raw_other = other.value.lower()
                for k in range(2):
                    plugins.append((server, f"{raw_other}p{k:02d}", raw_other, first_week))

    total_weeks = params.n_windows * wpw
    config_text = _fabricated_config(params, total_weeks)
    return FabricatedLogs(tuple(visits), tuple(plugins), config_text, params.n_windows, servers)


def _week_timestamp(epoch: date, week: int) -> str:
    day = epoch + timedelta(weeks=week)
    return f"{day.isoformat()}T12:00:00Z"


def _fabricated_config(params: FabricationParams, total_weeks: int) -> str:
    cp = configparser.ConfigParser()
    cp["window"] = {
        "study_start_week": "0",
        "study_end_week": str(total_weeks - 1),
        "weeks_per_window": str(params.weeks_per_window),
        "week_epoch": params.week_epoch.isoformat(),
    }
    cp["filters"] = {
        "min_live_weeks": str(min(16, total_weeks)),
        "require_governance_info": "true",
        "min_survival_weeks": str(min(4, total_weeks)),
    }
    buffer = io.StringIO()
    cp.write(buffer)
    return buffer.getvalue()
