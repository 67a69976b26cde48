"""Independent oracles used by the test suite.

Everything here is deliberately written with plain Python loops and the
stdlib `random` module so it shares no code path (and no RNG) with the
package under test.
"""

from __future__ import annotations

import random

STATES = ("at", "aT", "At", "AT")


def brute_force_counts(state_rows: list[list[int]]) -> list[list[int]]:
    """Nested-loop 4x4 transition counts over dyad state rows."""
    counts = [[0] * 4 for _ in range(4)]
    for row in state_rows:
        for w in range(len(row) - 1):
            counts[row[w]][row[w + 1]] += 1
    return counts


def brute_force_observed(counts: list[list[int]]) -> list[list[float]]:
    """Row-normalized matrix; zero-occupancy rows become None-like NaN floats."""
    out = []
    for row in counts:
        total = sum(row)
        if total == 0:
            out.append([float("nan")] * 4)
        else:
            out.append([c / total for c in row])
    return out


def brute_force_marginals(counts: list[list[int]]) -> tuple[list[list[int]], list[list[int]]]:
    """Project joint counts onto (rule, traffic) 2x2 count matrices.

    Joint state s = 2*rule + traffic.
    """
    rule = [[0, 0], [0, 0]]
    traffic = [[0, 0], [0, 0]]
    for s in range(4):
        x, y = s // 2, s % 2
        for s2 in range(4):
            x2, y2 = s2 // 2, s2 % 2
            rule[x][x2] += counts[s][s2]
            traffic[y][y2] += counts[s][s2]
    return rule, traffic


def brute_force_null(rule_probs: list[list[float]], traffic_probs: list[list[float]]) -> list[list[float]]:
    """Cell-by-cell product null from marginal probabilities."""
    null = [[float("nan")] * 4 for _ in range(4)]
    for x in range(2):
        for y in range(2):
            for x2 in range(2):
                for y2 in range(2):
                    null[2 * x + y][2 * x2 + y2] = rule_probs[x][x2] * traffic_probs[y][y2]
    return null


def simulate_coupled_dyads(
    n_dyads: int,
    n_windows: int,
    rule_appear: float,
    rule_vanish: float,
    traffic_appear: float,
    traffic_vanish: float,
    beta_inst_to_cult: float,
    beta_cult_to_inst: float,
    seed: int,
) -> list[list[int]]:
    """Straight-line simulation of the coupled two-layer chains.

    Initial states from each layer's baseline stationary distribution; per
    step, each layer's appearance probability is shifted by its beta when the
    other layer's link is currently present.
    """
    rng = random.Random(seed)

    def stationary(appear: float, vanish: float) -> float:
        total = appear + vanish
        return appear / total if total > 0 else 0.0

    pi_rule = stationary(rule_appear, rule_vanish)
    pi_traffic = stationary(traffic_appear, traffic_vanish)
    rows = []
    for _ in range(n_dyads):
        rule = rng.random() < pi_rule
        traffic = rng.random() < pi_traffic
        row = [2 * rule + traffic]
        for _ in range(n_windows - 1):
            p_rule_on = min(1.0, max(0.0, rule_appear + beta_cult_to_inst * traffic))
            p_traffic_on = min(1.0, max(0.0, traffic_appear + beta_inst_to_cult * rule))
            if rule:
                rule_next = rng.random() >= rule_vanish
            else:
                rule_next = rng.random() < p_rule_on
            if traffic:
                traffic_next = rng.random() >= traffic_vanish
            else:
                traffic_next = rng.random() < p_traffic_on
            rule, traffic = rule_next, traffic_next
            row.append(2 * rule + traffic)
        rows.append(row)
    return rows


def mc_expected_diff(
    transition: tuple[str, str],
    n_dyads: int,
    n_windows: int,
    rule_appear: float,
    rule_vanish: float,
    traffic_appear: float,
    traffic_vanish: float,
    beta_inst_to_cult: float,
    beta_cult_to_inst: float,
    seed: int,
) -> float:
    """Monte-Carlo expectation of one transition's observed-minus-null diff."""
    rows = simulate_coupled_dyads(
        n_dyads,
        n_windows,
        rule_appear,
        rule_vanish,
        traffic_appear,
        traffic_vanish,
        beta_inst_to_cult,
        beta_cult_to_inst,
        seed,
    )
    counts = brute_force_counts(rows)
    observed = brute_force_observed(counts)
    rule_counts, traffic_counts = brute_force_marginals(counts)
    null = brute_force_null(
        brute_force_observed_2(rule_counts), brute_force_observed_2(traffic_counts)
    )
    s = STATES.index(transition[0])
    s2 = STATES.index(transition[1])
    return observed[s][s2] - null[s][s2]


def brute_force_observed_2(counts: list[list[int]]) -> list[list[float]]:
    out = []
    for row in counts:
        total = sum(row)
        if total == 0:
            out.append([float("nan")] * 2)
        else:
            out.append([c / total for c in row])
    return out
