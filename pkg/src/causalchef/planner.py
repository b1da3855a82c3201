"""Causally guided action selection.

Candidate actions from a proposal source are mixed with causal scores
(``p_f = gamma * p_a + (1 - gamma) * p_c``), softmax-normalized, merged by
canonical action, and sampled; when no candidate is recognized the planner
falls back to the greedy causal backup over the full instructed action set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .kitchen import ACTIONS, MacroAction
from .matrix import CausalActionMatrix, query_all_scores, query_score

_TOKEN = re.compile(r"[a-z0-9]+")

# keyed by the alphanumeric collapse of the name, so token boundaries do not
# matter ("pickup_onion", "Pick Up Onion" and "pickup_onion()." all agree)
_CANONICAL = {"".join(_TOKEN.findall(action.value)): action for action in ACTIONS}

#: Table A5-style mixing-weight defaults per layout (FC varies by backbone).
GAMMA_DEFAULTS: dict = {
    "CR": 0.5,
    "AA": 0.5,
    "COR": 0.5,
    "CC": 0.5,
    "FC": {"gemma-7b": 0.6, "qwen-14b": 0.7, "llama-8b": 0.4, "llama-70b": 0.5},
}


def default_gamma(layout: str, backbone: str | None = None) -> float:
    entry = GAMMA_DEFAULTS.get(layout.upper(), 0.5)
    if isinstance(entry, dict):
        if backbone is None:
            return 0.5
        return entry.get(backbone.lower(), 0.5)
    return entry


def canonicalize(text: str) -> MacroAction | None:
    """Resolve raw proposal text to a macro action, or None if unrecognized.

    Lowercases and strips punctuation, parentheses, whitespace, and
    underscores before matching, so variants such as ``put_onion_in_pot()``,
    ``put_onion_in_pot().``, ``put_onion_In_Pot`` and ``Put Onion in Pot``
    all resolve to the same action.
    """
    return _CANONICAL.get("".join(_TOKEN.findall(text.lower())))


@dataclass
class Proposal:
    raw_text: str
    canonical: MacroAction | None
    p_a: float

    @classmethod
    def from_text(cls, text: str, p_a: float) -> "Proposal":
        return cls(raw_text=text, canonical=canonicalize(text), p_a=float(p_a))


@dataclass
class ProposalSet:
    proposals: list[Proposal] = field(default_factory=list)
    scenario: tuple[np.ndarray, np.ndarray] | None = None  # (state bits, prev-action bits)
    transport_failure: bool = False

    def __post_init__(self) -> None:
        total = sum(p.p_a for p in self.proposals)
        if any(p.p_a < 0.0 for p in self.proposals):
            raise ValueError("proposal probabilities must be nonnegative")
        if total > 1.0 + 1e-9:
            raise ValueError(f"proposal probabilities sum to {total} > 1")

    def recognized(self) -> list[Proposal]:
        return [p for p in self.proposals if p.canonical is not None]

    def unrecognized_count(self) -> int:
        return sum(1 for p in self.proposals if p.canonical is None)


@dataclass
class PlannerConfig:
    gamma: float = 0.5
    seed: int = 0
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class PlanDecision:
    chosen: MacroAction
    path: str  # "reweighted" | "backup"
    distribution: list[tuple[str, float]]
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen.value,
            "path": self.path,
            "distribution": [[name, prob] for name, prob in self.distribution],
            "diagnostics": self.diagnostics,
        }


def reweight(p_a: float, p_c: float, gamma: float) -> float:
    """Mix proposer probability and causal score: gamma*p_a + (1-gamma)*p_c."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma * p_a + (1.0 - gamma) * p_c


def softmax(values, temperature: float = 1.0) -> np.ndarray:
    """Normalize mixed scores into a probability vector."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("softmax of an empty list")
    if not np.all(np.isfinite(arr)):
        raise ValueError("softmax input must be finite")
    shifted = (arr - arr.max()) / temperature
    exp = np.exp(shifted)
    return exp / exp.sum()


def merge_redundant(pairs: list[tuple[MacroAction, float]]) -> list[tuple[MacroAction, float]]:
    """Collapse same-action entries by summing probabilities, keeping first-seen order."""
    merged: dict[MacroAction, float] = {}
    for action, prob in pairs:
        merged[action] = merged.get(action, 0.0) + prob
    return list(merged.items())


def sample_action(distribution: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index from a categorical distribution."""
    dist = np.asarray(distribution, dtype=float)
    total = dist.sum()
    if total <= 0.0:
        raise ValueError("cannot sample from an all-zero distribution")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"distribution sums to {total}, expected 1")
    return int(np.searchsorted(np.cumsum(dist), rng.random(), side="right").clip(0, dist.size - 1))


def backup_action(
    matrix: CausalActionMatrix,
    state_bits: np.ndarray,
    prev_action_bits: np.ndarray,
) -> MacroAction:
    """Greedy fallback: the instructed action with the highest causal score.

    Ties, including the cold all-zero matrix, resolve to the lowest-index
    action.
    """
    scores = query_all_scores(matrix, state_bits, prev_action_bits)
    return ACTIONS[int(np.argmax(scores))]


def plan(
    proposal_set: ProposalSet,
    matrix: CausalActionMatrix,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> PlanDecision:
    """Select the next action from a proposal set (or the causal backup).

    Recognized proposals are reweighted with their causal scores, softmaxed,
    merged by canonical action, and sampled.  If nothing is recognized the
    backup path returns the causal argmax over the full action set.
    """
    if proposal_set.scenario is None:
        raise ValueError("proposal set carries no scenario")
    state_bits, prev_bits = proposal_set.scenario
    recognized = proposal_set.recognized()

    if not recognized:
        scores = query_all_scores(matrix, state_bits, prev_bits)
        chosen = ACTIONS[int(np.argmax(scores))]
        return PlanDecision(
            chosen=chosen,
            path="backup",
            distribution=[(chosen.value, 1.0)],
            diagnostics={
                "causal_scores": {a.value: float(s) for a, s in zip(ACTIONS, scores)},
                "uninformed": bool(np.all(scores == 0.0)),
                "unrecognized_proposals": proposal_set.unrecognized_count(),
            },
        )

    p_c = [query_score(matrix, state_bits, prev_bits, p.canonical) for p in recognized]
    p_f = [reweight(p.p_a, c, config.gamma) for p, c in zip(recognized, p_c)]
    probs = softmax(p_f, temperature=config.temperature)
    # merging preserves the softmax total, so no renormalization happens here
    merged = merge_redundant([(p.canonical, float(prob)) for p, prob in zip(recognized, probs)])
    index = sample_action(np.asarray([prob for _, prob in merged]), rng)
    chosen = merged[index][0]
    return PlanDecision(
        chosen=chosen,
        path="reweighted",
        distribution=[(action.value, prob) for action, prob in merged],
        diagnostics={
            "candidates": [p.raw_text for p in recognized],
            "p_a": [p.p_a for p in recognized],
            "p_c": [float(c) for c in p_c],
            "p_f": [float(v) for v in p_f],
            "post_softmax": [float(v) for v in probs],
            "merged_groups": {
                action.value: [p.raw_text for p in recognized if p.canonical is action]
                for action, _ in merged
            },
            "unrecognized_proposals": proposal_set.unrecognized_count(),
        },
    )
