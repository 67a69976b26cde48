"""Joint-state Markov estimation and spillover statistics for a layer pair.

A dyad's joint state couples one rule layer with the traffic layer. States are
written at/aT/At/AT: the first letter is the rule link, the second the traffic
link, lower case absent and upper case present. Internally a state is the
integer 2*rule + traffic, so the labels above map to 0..3 in order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .layers import Dyad, Layer, LayerSnapshot

__all__ = [
    "STATE_LABELS",
    "N_STATES",
    "joint_state",
    "state_label",
    "state_index",
    "StateSequence",
    "TransitionTable",
    "MarginalChain",
    "SpilloverEstimate",
    "encode_sequences",
    "count_transitions",
    "dyad_transition_counts",
    "observed_matrix",
    "marginal_chains",
    "null_matrix",
    "spillover_analytic",
    "spillover_bootstrap",
]

STATE_LABELS: tuple[str, ...] = ("at", "aT", "At", "AT")
N_STATES = 4


def joint_state(rule_present: bool, traffic_present: bool) -> int:
    return 2 * int(rule_present) + int(traffic_present)


def state_label(state: int) -> str:
    return STATE_LABELS[state]


def state_index(label: str) -> int:
    try:
        return STATE_LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown joint state label {label!r}") from None


@dataclass(frozen=True)
class StateSequence:
    """One dyad's joint-state trajectory, one state per window."""

    dyad: Dyad | str
    states: np.ndarray
    rule_layer: Layer | None = None
    traffic_layer: Layer | None = None

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.states, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("states must be a 1-d sequence")
        if arr.size and arr.max() >= N_STATES:
            raise ValueError("state values must be in 0..3")
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return int(self.states.size)


@dataclass(frozen=True)
class TransitionTable:
    """4x4 joint-state transition counts pooled over dyads and window pairs."""

    counts: np.ndarray
    n_dyads: int
    n_windows: int

    def __post_init__(self) -> None:
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.shape != (N_STATES, N_STATES):
            raise ValueError("counts must be 4x4")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        if counts.sum() != self.n_dyads * (self.n_windows - 1):
            raise ValueError("counts do not sum to n_dyads * (n_windows - 1)")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class MarginalChain:
    """One layer's 2-state chain projected out of the joint counts.

    ``probs`` rows are NaN where the layer never occupied that state.
    """

    role: str  # "rule" or "traffic"
    counts: np.ndarray
    probs: np.ndarray


def encode_sequences(
    rule_snapshots: Sequence[LayerSnapshot],
    traffic_snapshots: Sequence[LayerSnapshot],
    windows: Sequence[int] | None = None,
) -> list[StateSequence]:
    """Joint-state trajectories for every dyad over a common universe.

    Both snapshot lists must cover the same windows over an identical
    universe; a mismatch is a fatal consistency error. Dyads absent from a
    snapshot's link set are in the lower-case (absent) state.
    """
    rule_by_window = {snap.window: snap for snap in rule_snapshots}
    traffic_by_window = {snap.window: snap for snap in traffic_snapshots}
    windows = sorted(rule_by_window) if windows is None else sorted(windows)
    if sorted(rule_by_window) != windows or sorted(traffic_by_window) != windows:
        raise ValueError("snapshot windows do not cover the requested window range")

    universes = {snap.universe for snap in rule_snapshots} | {
        snap.universe for snap in traffic_snapshots
    }
    if len(universes) != 1:
        raise ValueError("universe mismatch across layer snapshots")
    universe = sorted(universes.pop())
    if len(universe) < 2:
        raise ValueError("universe must contain at least two servers")

    dyads = [(a, b) for i, a in enumerate(universe) for b in universe[i + 1 :]]
    index = {pair: k for k, pair in enumerate(dyads)}
    states = np.zeros((len(dyads), len(windows)), dtype=np.uint8)
    for col, window in enumerate(windows):
        for pair in rule_by_window[window].links:
            states[index[pair], col] += 2
        for pair in traffic_by_window[window].links:
            states[index[pair], col] += 1

    rule_layer = rule_snapshots[0].layer if rule_snapshots else None
    traffic_layer = traffic_snapshots[0].layer if traffic_snapshots else None
    return [
        StateSequence(pair, states[k], rule_layer=rule_layer, traffic_layer=traffic_layer)
        for k, pair in enumerate(dyads)
    ]


def _stack_states(sequences: Sequence[StateSequence]) -> np.ndarray:
    if not sequences:
        raise ValueError("no sequences given")
    lengths = {len(seq) for seq in sequences}
    if len(lengths) != 1:
        raise ValueError("sequences must all have the same length")
    if lengths.pop() < 2:
        raise ValueError("sequences must cover at least two windows")
    return np.stack([seq.states for seq in sequences])


def count_transitions(sequences: Sequence[StateSequence]) -> TransitionTable:
    """Count joint-state transitions over all dyads and consecutive windows."""
    states = _stack_states(sequences)
    flat = states[:, :-1].astype(np.int64) * N_STATES + states[:, 1:]
    counts = np.bincount(flat.ravel(), minlength=N_STATES * N_STATES)
    return TransitionTable(
        counts.reshape(N_STATES, N_STATES),
        n_dyads=states.shape[0],
        n_windows=states.shape[1],
    )


def dyad_transition_counts(sequences: Sequence[StateSequence]) -> np.ndarray:
    """Per-dyad 16-vectors of transition counts (row d sums to n_windows - 1)."""
    states = _stack_states(sequences)
    n = states.shape[0]
    flat = states[:, :-1].astype(np.int64) * N_STATES + states[:, 1:]
    flat += np.arange(n)[:, None] * 16
    return (
        np.bincount(flat.ravel(), minlength=16 * n).reshape(n, 16).astype(np.float64)
    )


def _row_normalize(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=-1, keepdims=True)
    probs = np.full_like(counts, np.nan)
    np.divide(counts, totals, out=probs, where=totals > 0)
    return probs


def observed_matrix(table: TransitionTable) -> np.ndarray:
    """Row-stochastic observed matrix; never-occupied rows stay NaN (Undefined)."""
    return _row_normalize(table.counts)


def marginal_chains(table: TransitionTable) -> tuple[MarginalChain, MarginalChain]:
    """Project the joint counts onto each layer's own 2-state chain."""
    joint = table.counts.reshape(2, 2, 2, 2)  # axes: rule, traffic, rule', traffic'
    rule_counts = joint.sum(axis=(1, 3))
    traffic_counts = joint.sum(axis=(0, 2))
    return (
        MarginalChain("rule", rule_counts, _row_normalize(rule_counts)),
        MarginalChain("traffic", traffic_counts, _row_normalize(traffic_counts)),
    )


def null_matrix(rule: MarginalChain, traffic: MarginalChain) -> np.ndarray:
    """Independent-layer null: exact product of the marginal chains.

    P_null[(x,y)->(x',y')] = p_rule(x->x') * p_traffic(y->y'), which with the
    2*rule + traffic state encoding is the Kronecker product of the two 2x2
    matrices. Undefined marginal rows propagate as NaN.
    """
    return np.kron(rule.probs, traffic.probs)


@dataclass(frozen=True)
class SpilloverEstimate:
    """Observed-minus-null estimate for one joint-state transition."""

    from_state: int
    to_state: int
    p_obs: float
    p_null: float
    diff: float
    ci_lo: float
    ci_hi: float
    n_from: int
    level: float
    method: str  # "analytic" or "bootstrap"

    @property
    def defined(self) -> bool:
        return not math.isnan(self.diff)

    @property
    def significant(self) -> bool:
        if not self.defined or math.isnan(self.ci_lo) or math.isnan(self.ci_hi):
            return False
        return self.ci_lo > 0 or self.ci_hi < 0

    @property
    def from_label(self) -> str:
        return state_label(self.from_state)

    @property
    def to_label(self) -> str:
        return state_label(self.to_state)


def _undefined_estimate(s: int, s2: int, n_from: int, level: float, method: str) -> SpilloverEstimate:
    nan = math.nan
    return SpilloverEstimate(s, s2, nan, nan, nan, nan, nan, n_from, level, method)


def _z_value(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("confidence level must be in (0, 1)")
    return NormalDist().inv_cdf(0.5 + level / 2)


def spillover_analytic(
    table: TransitionTable,
    p_obs: np.ndarray | None = None,
    p_null: np.ndarray | None = None,
    level: float = 0.99,
) -> list[SpilloverEstimate]:
    """All 16 spillover estimates with normal-approximation confidence intervals.

    The observed cell's standard error is binomial; the null cell's is
    propagated to first order from the two marginal cells' binomial variances,
    and the two are combined as if independent. Transitions out of a
    never-occupied state are returned Undefined, not imputed.
    """
    rule, traffic = marginal_chains(table)
    if p_obs is None:
        p_obs = observed_matrix(table)
    if p_null is None:
        p_null = null_matrix(rule, traffic)
    n_from = table.counts.sum(axis=1)
    n_rule = rule.counts.sum(axis=1)
    n_traffic = traffic.counts.sum(axis=1)
    z = _z_value(level)

    estimates: list[SpilloverEstimate] = []
    for s in range(N_STATES):
        x, y = divmod(s, 2)
        for s2 in range(N_STATES):
            if n_from[s] == 0:
                estimates.append(_undefined_estimate(s, s2, 0, level, "analytic"))
                continue
            x2, y2 = divmod(s2, 2)
            p = float(p_obs[s, s2])
            q = float(p_null[s, s2])
            r = float(rule.probs[x, x2])
            t = float(traffic.probs[y, y2])
            var_obs = p * (1 - p) / n_from[s]
            var_null = (
                t * t * r * (1 - r) / n_rule[x] + r * r * t * (1 - t) / n_traffic[y]
            )
            se = math.sqrt(var_obs + var_null)
            diff = p - q
            estimates.append(
                SpilloverEstimate(
                    s,
                    s2,
                    p,
                    q,
                    diff,
                    diff - z * se,
                    diff + z * se,
                    int(n_from[s]),
                    level,
                    "analytic",
                )
            )
    return estimates


def _diffs_from_counts(counts16: np.ndarray) -> np.ndarray:
    """Observed-minus-null diffs for a batch of 16-vector count tables."""
    m = counts16.shape[0]
    joint = counts16.reshape(m, N_STATES, N_STATES)
    p_obs = _row_normalize(joint)
    quad = counts16.reshape(m, 2, 2, 2, 2)
    p_rule = _row_normalize(quad.sum(axis=(2, 4)))
    p_traffic = _row_normalize(quad.sum(axis=(1, 3)))
    p_null = np.einsum("mac,mbd->mabcd", p_rule, p_traffic).reshape(m, N_STATES, N_STATES)
    return (p_obs - p_null).reshape(m, 16)


def _bootstrap_diffs(weights: np.ndarray, per_dyad: np.ndarray, workers: int) -> np.ndarray:
    if workers <= 1 or weights.shape[0] < 2 * workers:
        return _diffs_from_counts(weights @ per_dyad)
    blocks = np.array_split(np.arange(weights.shape[0]), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(lambda rows: _diffs_from_counts(weights[rows] @ per_dyad), blocks)
        )
    return np.vstack(parts)


def spillover_bootstrap(
    sequences: Sequence[StateSequence],
    b: int = 500,
    seed: int = 0,
    level: float = 0.99,
    workers: int = 1,
) -> list[SpilloverEstimate]:
    """Dyad-resampling bootstrap confidence intervals for all 16 transitions.

    Whole state sequences are resampled with replacement ``b`` times; the CI
    is the empirical (1-level)/2 and 1-(1-level)/2 quantile pair of the
    replicate diffs, widened if needed so the full-sample point estimate
    stays inside its own interval. All randomness is drawn up front from
    ``seed``, so results are bit-identical for any ``workers`` count.
    """
    if b < 100:
        raise ValueError("bootstrap needs at least 100 replicates")
    if len(sequences) < 2:
        raise ValueError("bootstrap needs at least 2 dyads")
    _z_value(level)  # validate the level early
    per_dyad = dyad_transition_counts(sequences)
    n = per_dyad.shape[0]
    n_windows = len(sequences[0])
    totals = per_dyad.sum(axis=0)
    table = TransitionTable(
        totals.astype(np.int64).reshape(N_STATES, N_STATES), n, n_windows
    )
    point = _diffs_from_counts(totals[None, :])[0]
    p_obs = observed_matrix(table)
    p_null = null_matrix(*marginal_chains(table))
    n_from = table.counts.sum(axis=1)

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(b, n))
    flat = (idx + np.arange(b)[:, None] * n).ravel()
    weights = np.bincount(flat, minlength=b * n).reshape(b, n).astype(np.float64)
    diffs = _bootstrap_diffs(weights, per_dyad, workers)

    alpha = 1 - level
    estimates: list[SpilloverEstimate] = []
    for s in range(N_STATES):
        for s2 in range(N_STATES):
            cell = 4 * s + s2
            if n_from[s] == 0:
                estimates.append(_undefined_estimate(s, s2, 0, level, "bootstrap"))
                continue
            column = diffs[:, cell]
            column = column[~np.isnan(column)]
            diff = float(point[cell])
            if column.size == 0:
                lo = hi = math.nan
            else:
                lo = float(np.quantile(column, alpha / 2))
                hi = float(np.quantile(column, 1 - alpha / 2))
                lo = min(lo, diff)
                hi = max(hi, diff)
            estimates.append(
                SpilloverEstimate(
                    s,
                    s2,
                    float(p_obs[s, s2]),
                    float(p_null[s, s2]),
                    diff,
                    lo,
                    hi,
                    int(n_from[s]),
                    level,
                    "bootstrap",
                )
            )
    return estimates
