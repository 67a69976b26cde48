"""Transition taxonomy (fast/slow/irrelevant) and hypothesis-level evidence summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .ingest import Category
from .markov import N_STATES, SpilloverEstimate, state_label

__all__ = [
    "Timescale",
    "Direction",
    "TransitionLabel",
    "classify",
    "CODED_TRANSITIONS",
    "DirectionalEvidence",
    "FastEvidence",
    "HypothesisSummary",
    "hypothesis_report",
]


class Timescale(Enum):
    FAST = "fast"
    SLOW = "slow"
    IRRELEVANT = "irrelevant"


class Direction(Enum):
    ADIRECTIONAL = "adirectional"
    INSTITUTION_TO_CULTURE = "institution_to_culture"
    CULTURE_TO_INSTITUTION = "culture_to_institution"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class TransitionLabel:
    code: str
    timescale: Timescale
    direction: Direction


# The six theoretically coded transitions; every other transition is X.
# States: 0=at, 1=aT, 2=At, 3=AT (rule letter first, traffic second).
CODED_TRANSITIONS: dict[tuple[int, int], TransitionLabel] = {
    (0, 3): TransitionLabel("F1.1", Timescale.FAST, Direction.ADIRECTIONAL),
    (3, 0): TransitionLabel("F1.2", Timescale.FAST, Direction.ADIRECTIONAL),
    (2, 3): TransitionLabel("S1.1", Timescale.SLOW, Direction.INSTITUTION_TO_CULTURE),
    (3, 2): TransitionLabel("S1.2", Timescale.SLOW, Direction.INSTITUTION_TO_CULTURE),
    (1, 3): TransitionLabel("S2.1", Timescale.SLOW, Direction.CULTURE_TO_INSTITUTION),
    (3, 1): TransitionLabel("S2.2", Timescale.SLOW, Direction.CULTURE_TO_INSTITUTION),
}

_IRRELEVANT = TransitionLabel("X", Timescale.IRRELEVANT, Direction.NOT_APPLICABLE)


def classify(from_state: int, to_state: int) -> TransitionLabel:
    """Label a joint-state transition; total over the 16-element transition space."""
    if not (0 <= from_state < N_STATES and 0 <= to_state < N_STATES):
        raise ValueError(f"invalid transition ({from_state}, {to_state})")
    return CODED_TRANSITIONS.get((from_state, to_state), _IRRELEVANT)


@dataclass(frozen=True)
class DirectionalEvidence:
    """Evidence for one direction: a gain transition plus its loss corroboration.

    A direction is supported only by a significantly positive gain estimate;
    the loss transition corroborates when significantly negative but can never
    establish support on its own.
    """

    direction: Direction
    gain_code: str
    gain: SpilloverEstimate | None
    loss_code: str
    loss: SpilloverEstimate | None
    verdict: str  # "supported" | "not supported" | "unavailable"
    corroborated: bool | None  # None when the loss estimate is unavailable


@dataclass(frozen=True)
class FastEvidence:
    gain: SpilloverEstimate | None  # F1.1
    loss: SpilloverEstimate | None  # F1.2
    co_transition: str  # "above null" | "below null" | "indistinguishable from null" | "unavailable"


@dataclass(frozen=True)
class HypothesisSummary:
    rule_category: Category
    institution_to_culture: DirectionalEvidence
    culture_to_institution: DirectionalEvidence
    fast: FastEvidence
    rule_link_mode: str
    ci_method: str
    level: float

    def to_json_dict(self) -> dict:
        return {
            "rule_category": self.rule_category.value,
            "rule_link_mode": self.rule_link_mode,
            "ci_method": self.ci_method,
            "level": self.level,
            "institution_to_culture": _evidence_dict(self.institution_to_culture),
            "culture_to_institution": _evidence_dict(self.culture_to_institution),
            "fast_cotransition": {
                "assessment": self.fast.co_transition,
                "F1.1": _estimate_dict(self.fast.gain),
                "F1.2": _estimate_dict(self.fast.loss),
            },
        }


def _estimate_dict(est: SpilloverEstimate | None) -> dict | None:
    if est is None:
        return None

    def clean(x: float) -> float | None:
        return None if math.isnan(x) else x

    return {
        "from": state_label(est.from_state),
        "to": state_label(est.to_state),
        "p_obs": clean(est.p_obs),
        "p_null": clean(est.p_null),
        "diff": clean(est.diff),
        "ci_lo": clean(est.ci_lo),
        "ci_hi": clean(est.ci_hi),
        "n_from": est.n_from,
        "significant": est.significant,
        "method": est.method,
    }


def _evidence_dict(evidence: DirectionalEvidence) -> dict:
    return {
        "verdict": evidence.verdict,
        "corroborated": evidence.corroborated,
        evidence.gain_code: _estimate_dict(evidence.gain),
        evidence.loss_code: _estimate_dict(evidence.loss),
    }


def _find(estimates: Sequence[SpilloverEstimate], code: str) -> SpilloverEstimate | None:
    for (s, s2), label in CODED_TRANSITIONS.items():
        if label.code == code:
            for est in estimates:
                if est.from_state == s and est.to_state == s2:
                    return est
    return None


def _verdict(gain: SpilloverEstimate | None) -> str:
    if gain is None or not gain.defined:
        return "unavailable"
    if gain.significant and gain.diff > 0:
        return "supported"
    return "not supported"


def _corroborated(loss: SpilloverEstimate | None) -> bool | None:
    if loss is None or not loss.defined:
        return None
    return loss.significant and loss.diff < 0


def _direction_evidence(
    estimates: Sequence[SpilloverEstimate],
    direction: Direction,
    gain_code: str,
    loss_code: str,
) -> DirectionalEvidence:
    gain = _find(estimates, gain_code)
    loss = _find(estimates, loss_code)
    return DirectionalEvidence(
        direction, gain_code, gain, loss_code, loss, _verdict(gain), _corroborated(loss)
    )


def _fast_evidence(estimates: Sequence[SpilloverEstimate]) -> FastEvidence:
    gain = _find(estimates, "F1.1")
    loss = _find(estimates, "F1.2")
    if gain is None or not gain.defined:
        assessment = "unavailable"
    elif gain.significant:
        assessment = "above null" if gain.diff > 0 else "below null"
    else:
        assessment = "indistinguishable from null"
    return FastEvidence(gain, loss, assessment)


def hypothesis_report(
    estimates_by_category: Mapping[Category, Sequence[SpilloverEstimate]],
    rule_link_mode: str,
    ci_method: str,
    level: float,
) -> list[HypothesisSummary]:
    """Assemble per-category directional evidence from spillover estimates.

    Args:
        estimates_by_category: the 16 transition estimates per rule category
            (missing or Undefined estimates surface as "unavailable").
        rule_link_mode: active rule-layer link rule, echoed into every summary.
        ci_method: CI construction used for the estimates, echoed likewise.
        level: confidence level of the intervals.
    """
    summaries = []
    for category in sorted(estimates_by_category, key=lambda c: c.value):
        estimates = estimates_by_category[category]
        summaries.append(
            HypothesisSummary(
                rule_category=category,
                institution_to_culture=_direction_evidence(
                    estimates, Direction.INSTITUTION_TO_CULTURE, "S1.1", "S1.2"
                ),
                culture_to_institution=_direction_evidence(
                    estimates, Direction.CULTURE_TO_INSTITUTION, "S2.1", "S2.2"
                ),
                fast=_fast_evidence(estimates),
                rule_link_mode=rule_link_mode,
                ci_method=ci_method,
                level=level,
            )
        )
    return summaries
