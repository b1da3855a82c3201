"""Proposal sources feeding the planner.

Three interchangeable sources produce candidate next actions with
probabilities: a scripted proposer that emulates a hallucinating language
model, a replay proposer for bit-exact reruns of recorded streams, and a
remote chat-completion client implementing the two-prompt
(analysis-then-plan) protocol.
"""

from __future__ import annotations

import json
import os
import string
from dataclasses import dataclass

import numpy as np
import requests

from .features import FeatureSchema
from .kitchen import ACTIONS
from .planner import Proposal, ProposalSet

#: Out-of-vocabulary action strings emitted when the scripted proposer hallucinates.
HALLUCINATED_ACTIONS = (
    "chop_tomato",
    "wash_plate",
    "grab_cheese",
    "turn_on_stove",
    "serve_salad",
    "open_fridge",
)

_DECORATIONS = ("{name}", "{name}()", "{name}().", "{title}")


@dataclass
class HallucinationProfile:
    invalid_rate: float = 0.0
    empty_rate: float = 0.0
    k: int = 5
    noise: float = 0.5

    def __post_init__(self) -> None:
        for name in ("invalid_rate", "empty_rate", "noise"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")


def _preferred_action_index(state_bits: np.ndarray, schema: FeatureSchema) -> int:
    """Greedy-chef preference reconstructed from the encoded state bits alone."""
    active = {schema.state_features[i] for i in np.flatnonzero(np.asarray(state_bits))}
    finished = any(name.startswith("pot_finished") for name in active)
    open_pot = any(
        name.startswith(f"pot{level}") for level in (0, 1, 2) for name in active
    )
    by_name = {a.value: i for i, a in enumerate(ACTIONS)}
    if "dish_with_soup1" in active:
        return by_name["deliver_soup"]
    if "hold_dish1" in active:
        return by_name["fill_dish_with_soup"] if finished else by_name["place_dish_on_counter"]
    if "empty_hand1" in active and finished:
        return by_name["pickup_dish"]
    if "hold_onion1" in active:
        return by_name["put_onion_in_pot"] if open_pot else by_name["place_onion_on_counter"]
    return by_name["pickup_onion"]


def _decorate(name: str, rng: np.random.Generator) -> str:
    pattern = _DECORATIONS[int(rng.integers(len(_DECORATIONS)))]
    return pattern.format(name=name, title=string.capwords(name, "_"))


def scripted_propose(
    state_bits: np.ndarray,
    prev_action_bits: np.ndarray,
    profile: HallucinationProfile,
    schema: FeatureSchema,
    rng: np.random.Generator,
) -> ProposalSet:
    """Emulate an LLM proposer with controllable failure modes.

    With probability ``empty_rate`` the whole set is empty.  Otherwise k
    candidates are drawn from the greedy-chef preference blended with a
    uniform distribution (weight ``noise``); each candidate is independently
    replaced by an out-of-vocabulary string with probability
    ``invalid_rate``.  Every emitted candidate carries p_a = 1/k.
    """
    scenario = (np.asarray(state_bits), np.asarray(prev_action_bits))
    if rng.random() < profile.empty_rate:
        return ProposalSet(proposals=[], scenario=scenario)
    preferred = _preferred_action_index(state_bits, schema)
    dist = np.full(len(ACTIONS), profile.noise / len(ACTIONS))
    dist[preferred] += 1.0 - profile.noise
    p_each = 1.0 / profile.k
    proposals = []
    for _ in range(profile.k):
        idx = int(rng.choice(len(ACTIONS), p=dist))
        if rng.random() < profile.invalid_rate:
            text = HALLUCINATED_ACTIONS[int(rng.integers(len(HALLUCINATED_ACTIONS)))]
        else:
            text = _decorate(ACTIONS[idx].value, rng)
        proposals.append(Proposal.from_text(text, p_each))
    return ProposalSet(proposals=proposals, scenario=scenario)


class ProposalLog:
    """Recorded proposal stream keyed by timestep, for bit-exact replays."""

    def __init__(self, entries: dict[int, ProposalSet] | None = None):
        self.entries: dict[int, ProposalSet] = entries or {}

    def record(self, t: int, proposal_set: ProposalSet) -> None:
        self.entries[t] = proposal_set

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for t in sorted(self.entries):
                ps = self.entries[t]
                doc = {
                    "t": t,
                    "proposals": [[p.raw_text, p.p_a] for p in ps.proposals],
                    "state": [int(b) for b in ps.scenario[0]],
                    "prev_action": [int(b) for b in ps.scenario[1]],
                    "transport_failure": ps.transport_failure,
                }
                handle.write(json.dumps(doc, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path: str) -> "ProposalLog":
        entries: dict[int, ProposalSet] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                entries[int(doc["t"])] = ProposalSet(
                    proposals=[Proposal.from_text(text, p) for text, p in doc["proposals"]],
                    scenario=(
                        np.asarray(doc["state"], dtype=np.uint8),
                        np.asarray(doc["prev_action"], dtype=np.uint8),
                    ),
                    transport_failure=bool(doc.get("transport_failure", False)),
                )
        return cls(entries)


def replay_propose(log: ProposalLog, t: int) -> ProposalSet:
    """Return the recorded proposal set for timestep ``t`` verbatim."""
    if t not in log.entries:
        raise KeyError(f"proposal log has no entry for timestep {t}")
    return log.entries[t]


@dataclass
class EndpointConfig:
    """Remote chat-completion endpoint settings.

    The API credential is read from the environment variable named by
    ``credential_env`` and never from configuration files.
    """

    base_url: str
    credential_env: str = "LLM_API_KEY"
    model: str = ""
    temperature: float = 1.0
    max_new_tokens: int = 256
    top_k: int = 50
    top_p: float = 0.9
    samples_per_step: int = 10
    timeout: float = 30.0
    retries: int = 2

    def __post_init__(self) -> None:
        if self.samples_per_step < 1:
            raise ValueError(f"samples_per_step must be at least 1, got {self.samples_per_step}")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")


DEFAULT_ANALYSIS_TEMPLATE = (
    "You are one of two cooks collaborating in a kitchen.\n"
    "Current observation:\n{observation}\n\n"
    "Briefly analyze the situation: what is each cook holding, what state are"
    " the pots in, and what matters most right now?"
)

DEFAULT_PLANNING_TEMPLATE = (
    "You are one of two cooks collaborating in a kitchen.\n"
    "Current observation:\n{observation}\n\n"
    "Analysis:\n{analysis}\n\n"
    "Reply with exactly one action name from this list and nothing else:\n"
    "pickup_onion, put_onion_in_pot, pickup_dish, fill_dish_with_soup,"
    " deliver_soup, place_onion_on_counter, place_dish_on_counter"
)


def load_template(path: str | None, default: str) -> str:
    if path is None:
        return default
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _http_transport(url: str, headers: dict, body: dict, timeout: float) -> dict:
    response = requests.post(url, headers=headers, json=body, timeout=timeout)
    response.raise_for_status()
    return response.json()


class TransportFailure(RuntimeError):
    """All retries against the remote endpoint failed."""


class RemoteProposer:
    """Two-prompt remote proposer: analysis completion, then K plan samples.

    p_a for each distinct reply text is its empirical frequency among the K
    planning completions.  Transport failures degrade to an empty proposal
    set flagged ``transport_failure`` so the planner falls back to the
    causal backup rather than blocking.
    """

    def __init__(
        self,
        config: EndpointConfig,
        analysis_template: str = DEFAULT_ANALYSIS_TEMPLATE,
        planning_template: str = DEFAULT_PLANNING_TEMPLATE,
        transport=None,
    ):
        self.config = config
        self.analysis_template = analysis_template
        self.planning_template = planning_template
        self.transport = transport or _http_transport

    def _headers(self) -> dict:
        credential = os.environ.get(self.config.credential_env, "")
        if not credential:
            raise RuntimeError(
                f"missing endpoint credential: set the {self.config.credential_env} environment variable"
            )
        return {"Authorization": f"Bearer {credential}", "Content-Type": "application/json"}

    def _complete(self, prompt: str) -> str:
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_new_tokens,
            "top_p": self.config.top_p,
        }
        last_error: Exception | None = None
        for _ in range(self.config.retries + 1):
            try:
                doc = self.transport(self.config.base_url, self._headers(), body, self.config.timeout)
                return str(doc["choices"][0]["message"]["content"])
            except Exception as exc:  # noqa: BLE001 - every transport error degrades the same way
                last_error = exc
        raise TransportFailure(str(last_error))

    def propose(
        self,
        observation: str,
        state_bits: np.ndarray,
        prev_action_bits: np.ndarray,
    ) -> ProposalSet:
        scenario = (np.asarray(state_bits), np.asarray(prev_action_bits))
        try:
            analysis = self._complete(self.analysis_template.format(observation=observation))
            planning_prompt = self.planning_template.format(observation=observation, analysis=analysis)
            texts = [self._complete(planning_prompt) for _ in range(self.config.samples_per_step)]
        except TransportFailure:
            return ProposalSet(proposals=[], scenario=scenario, transport_failure=True)
        counts: dict[str, int] = {}
        for text in texts:
            text = text.strip()
            counts[text] = counts.get(text, 0) + 1
        k = self.config.samples_per_step
        proposals = [Proposal.from_text(text, count / k) for text, count in counts.items()]
        return ProposalSet(proposals=proposals, scenario=scenario)
