"""Walk through the kitchen MDP: states, legal actions, cooking, delivery.

Runs a single hand-scripted episode on the one-pot layout and prints what
happens at each stage of the soup workflow.
"""

from causalchef import KitchenLayout, MacroAction, legal_actions, reset, step

layout = KitchenLayout(name="cramped_room", num_pots=1, cook_time=5)
state = reset(layout)
print(f"fresh kitchen: hands={state.hands}, pot onions={state.pots[0].onions}")
print(f"legal for cook 0: {sorted(a.value for a in legal_actions(state, 0, layout))}\n")

script = [
    (MacroAction.PICKUP_ONION, MacroAction.PICKUP_ONION),
    (MacroAction.PUT_ONION_IN_POT, MacroAction.PUT_ONION_IN_POT),
    (MacroAction.PICKUP_ONION, MacroAction.PICKUP_DISH),
    (MacroAction.PUT_ONION_IN_POT, None),
]

for joint in script:
    outcome = step(state, joint, layout)
    state = outcome.next_state
    pot = state.pots[0]
    print(
        f"t={state.t}: actions={tuple(a.value if a else '-' for a in joint)} "
        f"executed={outcome.executed} hands={state.hands} "
        f"pot(onions={pot.onions}, remaining={pot.cooking_remaining}, done={pot.finished})"
    )

print("\nwaiting for the pot to cook...")
while not state.pots[0].finished:
    state = step(state, (None, None), layout).next_state
print(f"t={state.t}: pot finished\n")

for joint in [
    (None, MacroAction.FILL_DISH_WITH_SOUP),
    (None, MacroAction.DELIVER_SOUP),
]:
    outcome = step(state, joint, layout)
    state = outcome.next_state
    print(
        f"t={state.t}: actions={tuple(a.value if a else '-' for a in joint)} "
        f"reward={outcome.reward} deliveries={state.deliveries}"
    )

invalid = step(state, (MacroAction.DELIVER_SOUP, None), layout)
print(f"\ndelivering with an empty hand: invalid={invalid.invalid[0]}, state untouched")
