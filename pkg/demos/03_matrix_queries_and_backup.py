"""Query a causal action matrix and watch the greedy backup path.

Loads a hand-built matrix with a few interpretable edges (prior action
"pickup onion" drives "put onion in pot"; a finished pot drives "fill dish
with soup") and shows how scores are summed over the active features.
"""

import numpy as np

from causalchef import (
    ACTIONS,
    CausalActionMatrix,
    backup_action,
    query_all_scores,
    query_score,
    schema_for_pots,
)

schema = schema_for_pots(1)
entries = np.zeros((schema.action_dim, schema.parent_dim))


def set_edge(parent: str, child: str, weight: float) -> None:
    row = schema.action_index(child)
    if parent in schema.state_features:
        col = schema.state_index(parent)
    else:
        col = schema.state_dim + schema.action_index(parent)
    entries[row, col] = weight


set_edge("pickup_onion", "put_onion_in_pot", 0.6)
set_edge("pickup_onion", "place_onion_on_counter", 0.5)
set_edge("pot2", "put_onion_in_pot", 0.9)
set_edge("pot_finished", "put_onion_in_pot", 0.2)
set_edge("pot_finished", "fill_dish_with_soup", 0.9)
set_edge("hold_dish1", "fill_dish_with_soup", 0.8)
set_edge("dish_with_soup1", "deliver_soup", 0.9)
matrix = CausalActionMatrix(entries=entries, schema=schema)


def scenario(state_names, prev=None):
    state = np.zeros(schema.state_dim, dtype=np.uint8)
    for name in state_names:
        state[schema.state_index(name)] = 1
    prev_bits = np.zeros(schema.action_dim, dtype=np.uint8)
    if prev:
        prev_bits[schema.action_index(prev)] = 1
    return state, prev_bits


print("holding an onion, pot has 2 onions, just picked the onion up:")
state, prev = scenario(("hold_onion1", "pot2", "empty_hand2"), prev="pickup_onion")
score = query_score(matrix, state, prev, "put_onion_in_pot")
print(f"  score(put_onion_in_pot) = 0.6 (prev action) + 0.9 (pot with 2) = {score}")
for action, value in zip(ACTIONS, query_all_scores(matrix, state, prev)):
    print(f"    {action.value:<24} {value:.2f}")

print("\npot finished, holding a dish — the greedy backup picks:")
state, prev = scenario(("hold_dish1", "pot_finished", "empty_hand2"), prev="pickup_dish")
print(f"  {backup_action(matrix, state, prev).value}")

print("\ncold (all-zero) matrix falls back to the lowest-index action:")
cold = CausalActionMatrix(entries=np.zeros_like(entries), schema=schema)
print(f"  {backup_action(cold, state, prev).value}")
