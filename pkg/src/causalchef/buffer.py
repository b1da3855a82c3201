"""Trajectory buffer: collection, movement relabeling, JSONL persistence.

A buffer episode is one agent seat's trajectory.  By default collection
pools both seats of each simulated game, so 500 buffer episodes come from
250 two-agent games and contain 500 x horizon records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSchema, encode_action, encode_state
from .kitchen import KitchenLayout, reset, step
from .policies import PolicySpec, policy_act

META_PREFIX = "#META "


class BufferFormatError(ValueError):
    """Raised when a persisted buffer fails to parse or validate."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class CollectionError(RuntimeError):
    """Raised when the behavior policy fails mid-episode."""


@dataclass
class TimestepRecord:
    episode: int
    t: int
    state: np.ndarray
    prev_action: np.ndarray
    action: np.ndarray

    def to_json(self) -> str:
        doc = {
            "episode": self.episode,
            "t": self.t,
            "state": [int(b) for b in self.state],
            "prev_action": [int(b) for b in self.prev_action],
            "action": [int(b) for b in self.action],
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "TimestepRecord":
        return cls(
            episode=int(doc["episode"]),
            t=int(doc["t"]),
            state=np.asarray(doc["state"], dtype=np.uint8),
            prev_action=np.asarray(doc["prev_action"], dtype=np.uint8),
            action=np.asarray(doc["action"], dtype=np.uint8),
        )


@dataclass
class Buffer:
    records: list[TimestepRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def arrays(self, dtype=np.float64) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense (state, prev_action, action) matrices for training."""
        states = np.stack([r.state for r in self.records]).astype(dtype)
        prev = np.stack([r.prev_action for r in self.records]).astype(dtype)
        actions = np.stack([r.action for r in self.records]).astype(dtype)
        return states, prev, actions


def collect_buffer(
    layout: KitchenLayout,
    policy: PolicySpec,
    episodes: int,
    horizon: int,
    seed: int,
    schema: FeatureSchema,
    seats: str = "both",
) -> Buffer:
    """Run the behavior policy in self-play and record per-seat trajectories.

    ``seats="both"`` (the default) emits two buffer episodes per simulated
    game, one per seat; ``seats="0"`` or ``"1"`` records a single fixed seat
    per game.  Records are encoded from the acting seat's perspective, with
    ``prev_action`` tracking that seat's last successfully executed action
    (all-zero sentinel before the first).  A policy action invalidated by the
    partner's earlier move in the same step is dropped from the buffer.
    Fully deterministic for a fixed seed.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if episodes <= 0:
        raise ValueError(f"episodes must be positive, got {episodes}")
    if seats not in ("both", "0", "1"):
        raise ValueError(f"seats must be 'both', '0' or '1', got {seats!r}")

    per_game = 2 if seats == "both" else 1
    games = math.ceil(episodes / per_game)
    game_seeds = np.random.SeedSequence(seed).spawn(games)
    records: list[TimestepRecord] = []
    dropped = 0

    for game_idx in range(games):
        seat_rngs = [np.random.default_rng(s) for s in game_seeds[game_idx].spawn(2)]
        if seats == "both":
            seat_to_episode = {0: 2 * game_idx, 1: 2 * game_idx + 1}
            recorded_seats = [s for s, ep in seat_to_episode.items() if ep < episodes]
        else:
            fixed = int(seats)
            seat_to_episode = {fixed: game_idx}
            recorded_seats = [fixed]
        state = reset(layout)
        prev_actions: list = [None, None]
        for t in range(1, horizon + 1):
            chosen = []
            for agent in (0, 1):
                try:
                    chosen.append(policy_act(policy, state, agent, layout, seat_rngs[agent]))
                except Exception as exc:
                    raise CollectionError(
                        f"behavior policy failed in game {game_idx}, step {t}: {exc}"
                    ) from exc
            pending = {}
            for agent in recorded_seats:
                if chosen[agent] is None:
                    continue
                pending[agent] = TimestepRecord(
                    episode=seat_to_episode[agent],
                    t=t,
                    state=encode_state(state, schema, perspective=agent),
                    prev_action=encode_action(prev_actions[agent], schema),
                    action=encode_action(chosen[agent], schema),
                )
            outcome = step(state, (chosen[0], chosen[1]), layout)
            for agent in recorded_seats:
                if agent in pending and outcome.executed[agent]:
                    records.append(pending[agent])
                elif agent in pending:
                    dropped += 1
            for agent in (0, 1):
                if outcome.executed[agent]:
                    prev_actions[agent] = chosen[agent]
            state = outcome.next_state

    records.sort(key=lambda r: (r.episode, r.t))
    meta = {
        "N": len(records),
        "T": horizon,
        "episodes": episodes,
        "policy_name": policy.kind,
        "epsilon": policy.epsilon,
        "seed": seed,
        "seats": seats,
        "layout": layout.name,
        "state_dim": schema.state_dim,
        "action_dim": schema.action_dim,
        "dropped": dropped,
    }
    return Buffer(records=records, meta=meta)


def relabel_movement(
    raw: list[tuple[np.ndarray, str]],
    schema: FeatureSchema,
    episode: int = 0,
) -> tuple[list[TimestepRecord], int]:
    """Replace movement actions by the most recent preceding high-level action.

    ``raw`` is one episode's (state bits, action name) sequence where any
    action name outside the schema's seven is treated as movement.  State
    observations pass through unchanged.  Leading movement steps with no
    preceding high-level action are dropped; the drop count is returned
    alongside the relabeled records.
    """
    high_level = set(schema.action_features)
    records: list[TimestepRecord] = []
    last_high: str | None = None
    prev_vec = encode_action(None, schema)
    dropped = 0
    t = 0
    for state_bits, action_name in raw:
        if action_name in high_level:
            last_high = action_name
        elif last_high is None:
            dropped += 1
            continue
        label = last_high
        t += 1
        action_vec = encode_action(label, schema)
        records.append(
            TimestepRecord(
                episode=episode,
                t=t,
                state=np.asarray(state_bits, dtype=np.uint8),
                prev_action=prev_vec,
                action=action_vec,
            )
        )
        prev_vec = action_vec
    return records, dropped


def save_buffer(buffer: Buffer, path: str) -> None:
    """Write the buffer as one meta header line plus one JSON line per record."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(META_PREFIX + json.dumps(buffer.meta, sort_keys=True) + "\n")
        for record in buffer.records:
            handle.write(record.to_json())
            handle.write("\n")


def load_buffer(path: str, schema: FeatureSchema | None = None) -> Buffer:
    """Load a JSONL buffer, validating dimensions line by line."""
    records: list[TimestepRecord] = []
    meta: dict = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(META_PREFIX):
                meta = json.loads(line[len(META_PREFIX):])
                continue
            try:
                doc = json.loads(line)
                record = TimestepRecord.from_dict(doc)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise BufferFormatError(f"malformed record: {exc}", line=lineno) from exc
            records.append(record)
            state_dim = schema.state_dim if schema else meta.get("state_dim")
            action_dim = schema.action_dim if schema else meta.get("action_dim")
            if state_dim is not None and record.state.shape != (state_dim,):
                raise BufferFormatError(
                    f"state has {record.state.shape[0]} bits, expected {state_dim}", line=lineno
                )
            if action_dim is not None and (
                record.prev_action.shape != (action_dim,) or record.action.shape != (action_dim,)
            ):
                raise BufferFormatError(
                    f"action vectors must have {action_dim} bits", line=lineno
                )
    return Buffer(records=records, meta=meta)
