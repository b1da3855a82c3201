"""Binary factorization of kitchen states and actions.

States and actions are encoded as indicator vectors over a fixed, ordered
feature registry.  The parent vector seen by the causal model is the
concatenation ``[state bits | previous-action bits]``; all bookkeeping about
which index means what lives here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .kitchen import ACTIONS, HAND_STATES, KitchenState, MacroAction

_HAND_FEATURE = {
    "empty": "empty_hand",
    "onion": "hold_onion",
    "dish": "hold_dish",
    "soup_dish": "dish_with_soup",
}

#: Per-pot fill levels, in order: 0..3 onions, then finished.
_POT_LEVELS = ("pot0", "pot1", "pot2", "pot3", "pot_finished")


class SchemaError(ValueError):
    """Raised on schema/layout dimension or naming mismatches."""


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered registry of state and action features.

    State features come first in the parent vector, previous-action features
    after, so index ``j < state_dim`` is a state bit and ``j >= state_dim``
    is a previous-action bit.
    """

    state_features: tuple[str, ...]
    action_features: tuple[str, ...]

    def __post_init__(self) -> None:
        names = self.state_features + self.action_features
        if len(set(names)) != len(names):
            raise SchemaError("feature identifiers must be unique")
        if self.action_features != tuple(a.value for a in ACTIONS):
            raise SchemaError("action features must match the canonical macro-action order")

    @property
    def state_dim(self) -> int:
        return len(self.state_features)

    @property
    def action_dim(self) -> int:
        return len(self.action_features)

    @property
    def parent_dim(self) -> int:
        return self.state_dim + self.action_dim

    @property
    def num_pots(self) -> int:
        return sum(1 for name in self.state_features if name in ("pot0", "pot0_0", "pot0_1"))

    def parent_names(self) -> tuple[str, ...]:
        return self.state_features + self.action_features

    def state_index(self, name: str) -> int:
        return self.state_features.index(name)

    def action_index(self, action: MacroAction | str) -> int:
        name = action.value if isinstance(action, MacroAction) else str(action)
        try:
            return self.action_features.index(name)
        except ValueError:
            raise SchemaError(f"unknown action {name!r}") from None

    def fingerprint(self) -> str:
        digest = hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()
        return digest[:16]

    def to_json(self) -> str:
        doc = {
            "state_features": list(self.state_features),
            "action_features": list(self.action_features),
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        doc = json.loads(text)
        return cls(
            state_features=tuple(doc["state_features"]),
            action_features=tuple(doc["action_features"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_json())
            handle.write("\n")

    @classmethod
    def load(cls, path: str) -> "FeatureSchema":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_json(handle.read())


def schema_for_pots(num_pots: int) -> FeatureSchema:
    """Default schema for a 1-pot (S=14) or 2-pot (S=19) kitchen.

    Suffix 1 marks the controlling agent, suffix 2 the partner.  With one
    pot the pot features carry no pot index; with two each pot gets its own
    mutually exclusive group.
    """
    if num_pots not in (1, 2):
        raise SchemaError(f"num_pots must be 1 or 2, got {num_pots}")
    hand1 = tuple(f"{_HAND_FEATURE[h]}1" for h in HAND_STATES)
    hand2 = tuple(f"{_HAND_FEATURE[h]}2" for h in HAND_STATES)
    if num_pots == 1:
        pot_feats = _POT_LEVELS
    else:
        pot_feats = tuple(f"{level}_{k}" for k in range(num_pots) for level in _POT_LEVELS)
    state = hand1 + pot_feats + ("goal_delivered",) + hand2
    return FeatureSchema(state_features=state, action_features=tuple(a.value for a in ACTIONS))


def _pot_level(pot) -> str:
    if pot.finished:
        return "pot_finished"
    return f"pot{pot.onions}"


def encode_state(state: KitchenState, schema: FeatureSchema, perspective: int = 0) -> np.ndarray:
    """Encode a kitchen state as the schema's binary state vector.

    ``perspective`` selects which agent is "the controlling agent": its hand
    fills the ``*1`` group and the partner's hand the ``*2`` group.  Exactly
    one bit is set in each hand group and in each pot group;
    ``goal_delivered`` is sticky for the rest of the episode.
    """
    if len(state.pots) != schema.num_pots:
        raise SchemaError(
            f"schema expects {schema.num_pots} pot(s), state has {len(state.pots)}"
        )
    if perspective not in (0, 1):
        raise ValueError(f"perspective must be 0 or 1, got {perspective}")
    other = 1 - perspective
    bits = np.zeros(schema.state_dim, dtype=np.uint8)
    bits[schema.state_index(f"{_HAND_FEATURE[state.hands[perspective]]}1")] = 1
    bits[schema.state_index(f"{_HAND_FEATURE[state.hands[other]]}2")] = 1
    for k, pot in enumerate(state.pots):
        name = _pot_level(pot) if schema.num_pots == 1 else f"{_pot_level(pot)}_{k}"
        bits[schema.state_index(name)] = 1
    if state.deliveries > 0:
        bits[schema.state_index("goal_delivered")] = 1
    return bits


def decode_state(bits: np.ndarray, schema: FeatureSchema) -> dict:
    """Inverse of :func:`encode_state` up to the encoded equivalence class.

    Returns the canonical tuple of facts the bits represent: both hands, the
    per-pot fill level, and the delivered flag.
    """
    bits = np.asarray(bits)
    if bits.shape != (schema.state_dim,):
        raise SchemaError(f"expected {schema.state_dim} state bits, got shape {bits.shape}")
    active = {schema.state_features[i] for i in np.flatnonzero(bits)}
    hand_of = {v: k for k, v in _HAND_FEATURE.items()}

    def _one_of(group: list[str]) -> str:
        hits = [name for name in group if name in active]
        if len(hits) != 1:
            raise SchemaError(f"expected exactly one active bit in group {group}, got {hits}")
        return hits[0]

    hand1 = _one_of([f"{_HAND_FEATURE[h]}1" for h in HAND_STATES])
    hand2 = _one_of([f"{_HAND_FEATURE[h]}2" for h in HAND_STATES])
    pots = []
    for k in range(schema.num_pots):
        suffix = "" if schema.num_pots == 1 else f"_{k}"
        level = _one_of([f"{name}{suffix}" for name in _POT_LEVELS])
        pots.append(level[: -len(suffix)] if suffix else level)
    return {
        "hand1": hand_of[hand1[:-1]],
        "hand2": hand_of[hand2[:-1]],
        "pots": tuple(pots),
        "goal_delivered": "goal_delivered" in active,
    }


def encode_action(action: MacroAction | str | None, schema: FeatureSchema) -> np.ndarray:
    """One-hot action vector; ``None`` is the all-zero pre-episode sentinel."""
    bits = np.zeros(schema.action_dim, dtype=np.uint8)
    if action is not None:
        bits[schema.action_index(action)] = 1
    return bits


def active_indices(state_bits: np.ndarray, prev_action_bits: np.ndarray) -> np.ndarray:
    """Indices of set bits in the concatenated parent vector."""
    parent = np.concatenate([np.asarray(state_bits), np.asarray(prev_action_bits)])
    return np.flatnonzero(parent)
