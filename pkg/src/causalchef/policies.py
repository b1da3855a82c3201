"""Scripted behavior policies: buffer collectors and partner agents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kitchen import ACTIONS, KitchenLayout, KitchenState, MacroAction, legal_actions


@dataclass
class PolicySpec:
    kind: str = "greedy_chef"
    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in ("greedy_chef", "random_legal"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


def _greedy_preference(state: KitchenState, agent: int) -> MacroAction:
    """Soup-workflow priority chain: deliver > fill > grab dish > pot > onion."""
    hand = state.hands[agent]
    finished = any(p.finished for p in state.pots)
    open_pot = any(p.onions < 3 and p.cooking_remaining is None and not p.finished for p in state.pots)
    if hand == "soup_dish":
        return MacroAction.DELIVER_SOUP
    if hand == "dish" and finished:
        return MacroAction.FILL_DISH_WITH_SOUP
    if hand == "empty" and finished:
        return MacroAction.PICKUP_DISH
    if hand == "onion" and open_pot:
        return MacroAction.PUT_ONION_IN_POT
    return MacroAction.PICKUP_ONION


def policy_act(
    spec: PolicySpec,
    state: KitchenState,
    agent: int,
    layout: KitchenLayout,
    rng: np.random.Generator | None = None,
) -> MacroAction | None:
    """Pick this agent's next action, or ``None`` when nothing is legal.

    greedy_chef follows the priority chain, falling back to the lowest-index
    legal action when the preferred one is blocked; with probability epsilon
    it takes a uniform legal action instead.  random_legal is uniform over
    the legal set.  With epsilon=0 the greedy policy consumes no randomness.
    """
    legal = legal_actions(state, agent, layout)
    if not legal:
        return None
    ordered = [a for a in ACTIONS if a in legal]
    if spec.kind == "random_legal":
        if rng is None:
            raise ValueError("random_legal policy requires an rng")
        return ordered[int(rng.integers(len(ordered)))]
    if spec.epsilon > 0.0:
        if rng is None:
            raise ValueError("greedy_chef with epsilon > 0 requires an rng")
        if rng.random() < spec.epsilon:
            return ordered[int(rng.integers(len(ordered)))]
    preferred = _greedy_preference(state, agent)
    if preferred in legal:
        return preferred
    return ordered[0]
