"""Deterministic two-agent macro-action kitchen MDP.

Two cooks assemble and deliver onion soup: three onions go into a pot, the
pot cooks for a fixed number of timesteps, a finished pot is emptied into a
dish, and the full dish is delivered for a shared +20 reward.  Movement is
abstracted away entirely; agents act directly at the macro level.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

DELIVERY_REWARD = 20


class MacroAction(str, enum.Enum):
    """The seven macro actions, in canonical (schema) order."""

    PICKUP_ONION = "pickup_onion"
    PUT_ONION_IN_POT = "put_onion_in_pot"
    PICKUP_DISH = "pickup_dish"
    FILL_DISH_WITH_SOUP = "fill_dish_with_soup"
    DELIVER_SOUP = "deliver_soup"
    PLACE_ONION_ON_COUNTER = "place_onion_on_counter"
    PLACE_DISH_ON_COUNTER = "place_dish_on_counter"

    def __str__(self) -> str:  # json.dumps(str(a)) etc. stay readable
        return self.value


#: Canonical action ordering; index here == row index in the causal matrix.
ACTIONS: tuple[MacroAction, ...] = tuple(MacroAction)

ACTION_INDEX: dict[MacroAction, int] = {a: i for i, a in enumerate(ACTIONS)}

HAND_STATES = ("empty", "onion", "dish", "soup_dish")


class LayoutError(ValueError):
    """Raised for structurally invalid layout definitions."""


@dataclass(frozen=True)
class KitchenLayout:
    """Static kitchen configuration.

    ``capabilities`` restricts which macro actions each agent may ever take
    (used to model forced-coordination role splits); ``onion_source`` and
    ``dish_source`` say whether each agent draws items from an infinite
    dispenser or from the shared counter stock.
    """

    name: str
    num_pots: int = 1
    cook_time: int = 20
    capabilities: tuple[frozenset[MacroAction], frozenset[MacroAction]] = (
        frozenset(ACTIONS),
        frozenset(ACTIONS),
    )
    onion_source: tuple[str, str] = ("dispenser", "dispenser")
    dish_source: tuple[str, str] = ("dispenser", "dispenser")

    def validate(self) -> None:
        if self.num_pots not in (1, 2):
            raise LayoutError(f"num_pots must be 1 or 2, got {self.num_pots}")
        if self.cook_time <= 0:
            raise LayoutError(f"cook_time must be positive, got {self.cook_time}")
        for i, caps in enumerate(self.capabilities):
            if not caps:
                raise LayoutError(f"agent {i} has an empty capability mask")
            if not caps <= set(ACTIONS):
                raise LayoutError(f"agent {i} capability mask contains unknown actions")
        for src in (*self.onion_source, *self.dish_source):
            if src not in ("dispenser", "counter"):
                raise LayoutError(f"item source must be 'dispenser' or 'counter', got {src!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "KitchenLayout":
        caps = doc.get("capabilities")
        if caps is None:
            capabilities = (frozenset(ACTIONS), frozenset(ACTIONS))
        else:
            if len(caps) != 2:
                raise LayoutError("capabilities must list both agents")
            try:
                capabilities = tuple(frozenset(MacroAction(a) for a in agent) for agent in caps)
            except ValueError as exc:
                raise LayoutError(f"unknown action in capability mask: {exc}") from exc
        layout = cls(
            name=doc["name"],
            num_pots=int(doc.get("num_pots", 1)),
            cook_time=int(doc.get("cook_time", 20)),
            capabilities=capabilities,  # type: ignore[arg-type]
            onion_source=tuple(doc.get("onion_source", ("dispenser", "dispenser"))),
            dish_source=tuple(doc.get("dish_source", ("dispenser", "dispenser"))),
        )
        layout.validate()
        return layout

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_pots": self.num_pots,
            "cook_time": self.cook_time,
            "capabilities": [sorted(a.value for a in caps) for caps in self.capabilities],
            "onion_source": list(self.onion_source),
            "dish_source": list(self.dish_source),
        }


def load_layout(path: str) -> KitchenLayout:
    with open(path, "r", encoding="utf-8") as handle:
        return KitchenLayout.from_dict(json.load(handle))


def save_layout(layout: KitchenLayout, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(layout.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


@dataclass(frozen=True)
class PotState:
    """One pot: onion count, remaining cook time (while cooking), done flag."""

    onions: int = 0
    cooking_remaining: int | None = None
    finished: bool = False


@dataclass(frozen=True)
class KitchenState:
    """Joint world state. Frozen; `step` returns a new state."""

    hands: tuple[str, str] = ("empty", "empty")
    pots: tuple[PotState, ...] = (PotState(),)
    counter_onions: int = 0
    counter_dishes: int = 0
    deliveries: int = 0
    t: int = 0

    def canonical_key(self) -> tuple:
        """Hashable identity of the full state (used for mutation checks)."""
        return (
            self.hands,
            tuple((p.onions, p.cooking_remaining, p.finished) for p in self.pots),
            self.counter_onions,
            self.counter_dishes,
            self.deliveries,
            self.t,
        )


@dataclass(frozen=True)
class StepOutcome:
    next_state: KitchenState
    reward: int
    executed: tuple[bool, bool]
    invalid: tuple[bool, bool]


def reset(layout: KitchenLayout, seed: int | None = None) -> KitchenState:
    """Initial state: empty hands, empty pots, bare counters.

    The dynamics are deterministic, so ``seed`` does not influence the state;
    it is accepted so callers can treat every environment uniformly.
    """
    layout.validate()
    del seed
    return KitchenState(pots=tuple(PotState() for _ in range(layout.num_pots)))


def _open_pot(state: KitchenState) -> int | None:
    """Lowest-index pot that can still accept an onion."""
    for i, pot in enumerate(state.pots):
        if pot.onions < 3 and pot.cooking_remaining is None and not pot.finished:
            return i
    return None


def _finished_pot(state: KitchenState) -> int | None:
    for i, pot in enumerate(state.pots):
        if pot.finished:
            return i
    return None


def _precondition_holds(state: KitchenState, agent: int, action: MacroAction, layout: KitchenLayout) -> bool:
    hand = state.hands[agent]
    if action is MacroAction.PICKUP_ONION:
        if hand != "empty":
            return False
        return layout.onion_source[agent] == "dispenser" or state.counter_onions > 0
    if action is MacroAction.PUT_ONION_IN_POT:
        return hand == "onion" and _open_pot(state) is not None
    if action is MacroAction.PICKUP_DISH:
        if hand != "empty":
            return False
        return layout.dish_source[agent] == "dispenser" or state.counter_dishes > 0
    if action is MacroAction.FILL_DISH_WITH_SOUP:
        return hand == "dish" and _finished_pot(state) is not None
    if action is MacroAction.DELIVER_SOUP:
        return hand == "soup_dish"
    if action is MacroAction.PLACE_ONION_ON_COUNTER:
        return hand == "onion"
    if action is MacroAction.PLACE_DISH_ON_COUNTER:
        return hand == "dish"
    raise ValueError(f"unhandled action {action!r}")


def legal_actions(state: KitchenState, agent: int, layout: KitchenLayout) -> set[MacroAction]:
    """Capability-permitted actions whose preconditions hold right now."""
    if agent not in (0, 1):
        raise ValueError(f"agent index must be 0 or 1, got {agent}")
    return {
        action
        for action in layout.capabilities[agent]
        if _precondition_holds(state, agent, action, layout)
    }


def _apply(state: KitchenState, agent: int, action: MacroAction, layout: KitchenLayout) -> KitchenState:
    """Apply a legal action's effect. Caller has already checked legality."""
    hands = list(state.hands)
    if action is MacroAction.PICKUP_ONION:
        hands[agent] = "onion"
        onions = state.counter_onions - (1 if layout.onion_source[agent] == "counter" else 0)
        return replace(state, hands=tuple(hands), counter_onions=onions)
    if action is MacroAction.PUT_ONION_IN_POT:
        idx = _open_pot(state)
        assert idx is not None
        pots = list(state.pots)
        pots[idx] = replace(pots[idx], onions=pots[idx].onions + 1)
        hands[agent] = "empty"
        return replace(state, hands=tuple(hands), pots=tuple(pots))
    if action is MacroAction.PICKUP_DISH:
        hands[agent] = "dish"
        dishes = state.counter_dishes - (1 if layout.dish_source[agent] == "counter" else 0)
        return replace(state, hands=tuple(hands), counter_dishes=dishes)
    if action is MacroAction.FILL_DISH_WITH_SOUP:
        idx = _finished_pot(state)
        assert idx is not None
        pots = list(state.pots)
        pots[idx] = PotState()
        hands[agent] = "soup_dish"
        return replace(state, hands=tuple(hands), pots=tuple(pots))
    if action is MacroAction.DELIVER_SOUP:
        hands[agent] = "empty"
        return replace(state, hands=tuple(hands), deliveries=state.deliveries + 1)
    if action is MacroAction.PLACE_ONION_ON_COUNTER:
        hands[agent] = "empty"
        return replace(state, hands=tuple(hands), counter_onions=state.counter_onions + 1)
    if action is MacroAction.PLACE_DISH_ON_COUNTER:
        hands[agent] = "empty"
        return replace(state, hands=tuple(hands), counter_dishes=state.counter_dishes + 1)
    raise ValueError(f"unhandled action {action!r}")


def _tick_pots(state: KitchenState, layout: KitchenLayout) -> KitchenState:
    """Advance cook timers.

    A pot that reached 3 onions this step starts at ``cook_time`` and ticks
    immediately, so its soup becomes available exactly ``cook_time`` steps
    after the third onion lands.
    """
    pots = []
    for pot in state.pots:
        if pot.onions == 3 and not pot.finished:
            remaining = layout.cook_time if pot.cooking_remaining is None else pot.cooking_remaining
            remaining -= 1
            if remaining <= 0:
                pot = replace(pot, cooking_remaining=None, finished=True)
            else:
                pot = replace(pot, cooking_remaining=remaining)
        pots.append(pot)
    return replace(state, pots=tuple(pots))


def step(
    state: KitchenState,
    actions: tuple[MacroAction | str | None, MacroAction | str | None],
    layout: KitchenLayout,
) -> StepOutcome:
    """Resolve one joint timestep.

    Agent 0 resolves before agent 1, so agent 1 sees the intermediate state.
    An illegal or unrecognized action is flagged invalid and leaves the acting
    agent's portion of the state untouched; ``None`` is a deliberate no-op
    (neither executed nor invalid).  Reward is +20 per delivery this step.
    """
    deliveries_before = state.deliveries
    executed = [False, False]
    invalid = [False, False]
    current = state
    for agent in (0, 1):
        action = actions[agent]
        if action is None:
            continue
        if not isinstance(action, MacroAction):
            try:
                action = MacroAction(action)
            except ValueError:
                invalid[agent] = True
                continue
        if action in layout.capabilities[agent] and _precondition_holds(current, agent, action, layout):
            current = _apply(current, agent, action, layout)
            executed[agent] = True
        else:
            invalid[agent] = True
    current = _tick_pots(current, layout)
    current = replace(current, t=current.t + 1)
    reward = DELIVERY_REWARD * (current.deliveries - deliveries_before)
    return StepOutcome(
        next_state=current,
        reward=reward,
        executed=(executed[0], executed[1]),
        invalid=(invalid[0], invalid[1]),
    )
