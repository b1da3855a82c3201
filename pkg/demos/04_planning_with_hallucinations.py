"""Plan through noisy proposals: reweighting, merging, and the backup path.

Feeds the planner a proposal set containing duplicate formats, a
hallucinated action, and a causally wrong suggestion, then shows how the
mixing weight shifts the final distribution.
"""

import numpy as np

from causalchef import (
    CausalActionMatrix,
    PlannerConfig,
    Proposal,
    ProposalSet,
    plan,
    schema_for_pots,
)

schema = schema_for_pots(1)
entries = np.zeros((schema.action_dim, schema.parent_dim))
row = schema.action_index("put_onion_in_pot")
entries[row, schema.state_dim + schema.action_index("pickup_onion")] = 0.6
entries[row, schema.state_index("pot2")] = 0.9
entries[schema.action_index("fill_dish_with_soup"), schema.state_index("pot2")] = 0.1
matrix = CausalActionMatrix(entries=entries, schema=schema)

state = np.zeros(schema.state_dim, dtype=np.uint8)
for name in ("hold_onion1", "pot2", "empty_hand2"):
    state[schema.state_index(name)] = 1
prev = np.zeros(schema.action_dim, dtype=np.uint8)
prev[schema.action_index("pickup_onion")] = 1

proposals = ProposalSet(
    proposals=[
        Proposal.from_text("put_onion_in_pot()", 0.3),
        Proposal.from_text("put_onion_In_Pot", 0.1),      # duplicate format, merged later
        Proposal.from_text("fill_dish_with_soup", 0.4),    # causally wrong right now
        Proposal.from_text("season_the_broth", 0.2),       # hallucination, dropped
    ],
    scenario=(state, prev),
)

for gamma in (1.0, 0.5, 0.0):
    rng = np.random.default_rng(0)
    decision = plan(proposals, matrix, PlannerConfig(gamma=gamma), rng)
    dist = ", ".join(f"{name}={prob:.3f}" for name, prob in decision.distribution)
    print(f"gamma={gamma}: chose {decision.chosen.value:<20} distribution: {dist}")

print("\nfully hallucinated set falls back to the causal argmax:")
lost = ProposalSet(
    proposals=[Proposal.from_text("season_the_broth", 0.5), Proposal.from_text("juggle_pans", 0.5)],
    scenario=(state, prev),
)
decision = plan(lost, matrix, PlannerConfig(gamma=0.5), np.random.default_rng(0))
print(f"  path={decision.path}, chose {decision.chosen.value}")
