import numpy as np
import pytest

from causalchef.kitchen import KitchenLayout, KitchenState, MacroAction, PotState, legal_actions, reset, step
from causalchef.policies import PolicySpec, policy_act


def test_spec_validation():
    with pytest.raises(ValueError):
        PolicySpec(kind="clairvoyant")
    with pytest.raises(ValueError):
        PolicySpec(kind="greedy_chef", epsilon=1.5)


def test_greedy_priority_chain(cr_layout):
    greedy = PolicySpec(kind="greedy_chef", epsilon=0.0)
    assert policy_act(greedy, KitchenState(hands=("soup_dish", "empty")), 0, cr_layout) is MacroAction.DELIVER_SOUP
    finished = (PotState(onions=3, finished=True),)
    assert policy_act(greedy, KitchenState(hands=("dish", "empty"), pots=finished), 0, cr_layout) is MacroAction.FILL_DISH_WITH_SOUP
    assert policy_act(greedy, KitchenState(pots=finished), 0, cr_layout) is MacroAction.PICKUP_DISH
    assert policy_act(greedy, KitchenState(hands=("onion", "empty")), 0, cr_layout) is MacroAction.PUT_ONION_IN_POT
    assert policy_act(greedy, KitchenState(), 0, cr_layout) is MacroAction.PICKUP_ONION


def test_greedy_blocked_falls_back_to_lowest_index(cr_layout):
    greedy = PolicySpec(kind="greedy_chef", epsilon=0.0)
    # holding an onion while the pot cooks: placing it on the counter is all that is legal
    state = KitchenState(hands=("onion", "empty"), pots=(PotState(onions=3, cooking_remaining=5),))
    action = policy_act(greedy, state, 0, cr_layout)
    assert action is MacroAction.PLACE_ONION_ON_COUNTER


def test_greedy_epsilon_zero_deterministic_without_rng(cr_layout):
    greedy = PolicySpec(kind="greedy_chef", epsilon=0.0)
    state = KitchenState(hands=("onion", "empty"), pots=(PotState(onions=1),))
    assert all(policy_act(greedy, state, 0, cr_layout) is MacroAction.PUT_ONION_IN_POT for _ in range(5))


def test_no_legal_action_returns_sentinel():
    layout = KitchenLayout(
        name="starved", num_pots=1,
        capabilities=(frozenset({MacroAction.PICKUP_ONION}), frozenset({MacroAction.PICKUP_ONION})),
        onion_source=("counter", "counter"),
    )
    assert policy_act(PolicySpec(kind="greedy_chef", epsilon=0.0), reset(layout), 0, layout) is None


def test_random_legal_uniform(cr_layout, rng):
    spec = PolicySpec(kind="random_legal")
    state = reset(cr_layout)  # two legal actions: pickup_onion, pickup_dish
    counts = {MacroAction.PICKUP_ONION: 0, MacroAction.PICKUP_DISH: 0}
    n = 10_000
    for _ in range(n):
        counts[policy_act(spec, state, 0, cr_layout, rng)] += 1
    assert abs(counts[MacroAction.PICKUP_ONION] / n - 0.5) < 0.02


def test_epsilon_one_uniform_over_legal(cr_layout, rng):
    spec = PolicySpec(kind="greedy_chef", epsilon=1.0)
    state = KitchenState(hands=("onion", "empty"), pots=(PotState(onions=0),))
    legal = sorted(legal_actions(state, 0, cr_layout), key=lambda a: a.value)
    counts = {a: 0 for a in legal}
    n = 10_000
    for _ in range(n):
        counts[policy_act(spec, state, 0, cr_layout, rng)] += 1
    for action in legal:
        assert abs(counts[action] / n - 1.0 / len(legal)) < 0.02


def test_greedy_chef_delivers_within_episode(cr_layout, rng):
    """The collector policy actually produces deliveries on the CR layout."""
    spec = PolicySpec(kind="greedy_chef", epsilon=0.0)
    state = reset(cr_layout)
    for _ in range(400):
        joint = tuple(policy_act(spec, state, agent, cr_layout, rng) for agent in (0, 1))
        state = step(state, joint, cr_layout).next_state
    assert state.deliveries >= 1


def test_policy_only_emits_legal_actions(cr_layout, rng):
    spec = PolicySpec(kind="greedy_chef", epsilon=0.3)
    state = reset(cr_layout)
    for _ in range(300):
        for agent in (0, 1):
            action = policy_act(spec, state, agent, cr_layout, rng)
            assert action in legal_actions(state, agent, cr_layout)
        joint = tuple(policy_act(spec, state, agent, cr_layout, rng) for agent in (0, 1))
        state = step(state, joint, cr_layout).next_state
