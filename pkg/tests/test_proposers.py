import json

import numpy as np
import pytest

from causalchef.features import encode_action, encode_state, schema_for_pots
from causalchef.kitchen import ACTIONS, KitchenLayout, MacroAction, reset
from causalchef.planner import canonicalize
from causalchef.proposers import (
    EndpointConfig,
    HallucinationProfile,
    ProposalLog,
    RemoteProposer,
    TransportFailure,
    replay_propose,
    scripted_propose,
)


@pytest.fixture
def schema():
    return schema_for_pots(1)


@pytest.fixture
def fresh_bits(schema):
    layout = KitchenLayout(name="cramped_room", num_pots=1)
    state = encode_state(reset(layout), schema)
    prev = encode_action(None, schema)
    return state, prev


def test_profile_validation():
    with pytest.raises(ValueError):
        HallucinationProfile(invalid_rate=1.2)
    with pytest.raises(ValueError):
        HallucinationProfile(k=0)


def test_scripted_all_recognized_when_clean(schema, fresh_bits, rng):
    profile = HallucinationProfile(invalid_rate=0.0, empty_rate=0.0, k=5)
    for _ in range(50):
        ps = scripted_propose(*fresh_bits, profile, schema, rng)
        assert len(ps.proposals) == 5
        assert all(p.canonical is not None for p in ps.proposals)
        assert sum(p.p_a for p in ps.proposals) == pytest.approx(1.0)


def test_scripted_empty_rate_one(schema, fresh_bits, rng):
    profile = HallucinationProfile(empty_rate=1.0)
    for _ in range(20):
        assert scripted_propose(*fresh_bits, profile, schema, rng).proposals == []


def test_scripted_invalid_rate_frequency(schema, fresh_bits, rng):
    profile = HallucinationProfile(invalid_rate=0.3, empty_rate=0.0, k=1)
    bad = 0
    n = 10_000
    for _ in range(n):
        ps = scripted_propose(*fresh_bits, profile, schema, rng)
        bad += sum(1 for p in ps.proposals if p.canonical is None)
    assert abs(bad / n - 0.3) < 0.01


def test_scripted_prefers_greedy_action(schema, rng):
    # holding soup: deliver_soup should dominate the proposals
    state = np.zeros(schema.state_dim, dtype=np.uint8)
    state[schema.state_index("dish_with_soup1")] = 1
    state[schema.state_index("pot0")] = 1
    state[schema.state_index("empty_hand2")] = 1
    prev = np.zeros(schema.action_dim, dtype=np.uint8)
    profile = HallucinationProfile(invalid_rate=0.0, empty_rate=0.0, k=1, noise=0.3)
    counts = {}
    for _ in range(2000):
        ps = scripted_propose(state, prev, profile, schema, rng)
        name = ps.proposals[0].canonical.value
        counts[name] = counts.get(name, 0) + 1
    assert counts["deliver_soup"] > 1200


def test_scripted_deterministic_with_seed(schema, fresh_bits):
    profile = HallucinationProfile(invalid_rate=0.2, empty_rate=0.1, k=4)
    a = [scripted_propose(*fresh_bits, profile, schema, np.random.default_rng(5)).proposals for _ in range(1)]
    b = [scripted_propose(*fresh_bits, profile, schema, np.random.default_rng(5)).proposals for _ in range(1)]
    assert [(p.raw_text, p.p_a) for p in a[0]] == [(p.raw_text, p.p_a) for p in b[0]]


def test_proposal_log_round_trip(schema, fresh_bits, tmp_path, rng):
    profile = HallucinationProfile(invalid_rate=0.3, empty_rate=0.1, k=3)
    log = ProposalLog()
    for t in range(1, 21):
        log.record(t, scripted_propose(*fresh_bits, profile, schema, rng))
    path = tmp_path / "proposals.jsonl"
    log.save(str(path))
    loaded = ProposalLog.load(str(path))
    assert sorted(loaded.entries) == sorted(log.entries)
    for t in log.entries:
        original = log.entries[t]
        replayed = replay_propose(loaded, t)
        assert [(p.raw_text, p.p_a) for p in replayed.proposals] == [
            (p.raw_text, p.p_a) for p in original.proposals
        ]
    # recount: invalid proposals survive the round trip exactly
    live = sum(p.canonical is None for t in log.entries for p in log.entries[t].proposals)
    replay = sum(p.canonical is None for t in loaded.entries for p in loaded.entries[t].proposals)
    assert live == replay


def test_replay_missing_timestep(schema, fresh_bits, rng):
    log = ProposalLog()
    log.record(1, scripted_propose(*fresh_bits, HallucinationProfile(), schema, rng))
    with pytest.raises(KeyError):
        replay_propose(log, 99)


def test_endpoint_config_validation():
    with pytest.raises(ValueError):
        EndpointConfig(base_url="http://x", samples_per_step=0)
    with pytest.raises(ValueError):
        EndpointConfig(base_url="http://x", timeout=0)


def _fake_transport(script):
    """Transport stub that pops canned response texts."""
    calls = []

    def transport(url, headers, body, timeout):
        calls.append(body)
        text = script.pop(0)
        if isinstance(text, Exception):
            raise text
        return {"choices": [{"message": {"content": text}}]}

    transport.calls = calls
    return transport


def test_remote_two_prompt_flow(monkeypatch, fresh_bits):
    monkeypatch.setenv("LLM_API_KEY", "sk-test")
    script = ["the pot is empty; fetch an onion"] + ["pickup_onion"] * 6 + ["pickup_dish"] * 3 + ["chop_tomato"]
    transport = _fake_transport(script)
    proposer = RemoteProposer(
        EndpointConfig(base_url="http://llm.internal/v1/chat", samples_per_step=10),
        transport=transport,
    )
    ps = proposer.propose("You hold nothing.", *fresh_bits)
    by_text = {p.raw_text: p.p_a for p in ps.proposals}
    assert by_text["pickup_onion"] == pytest.approx(0.6)
    assert by_text["pickup_dish"] == pytest.approx(0.3)
    assert by_text["chop_tomato"] == pytest.approx(0.1)
    assert sum(by_text.values()) == pytest.approx(1.0)
    assert not ps.transport_failure
    # prompt 1 then 10 prompt-2 samples
    assert len(transport.calls) == 11
    assert "analyze" in transport.calls[0]["messages"][0]["content"].lower()
    assert "the pot is empty" in transport.calls[1]["messages"][0]["content"]


def test_remote_endpoint_down_degrades_to_empty(monkeypatch, fresh_bits):
    monkeypatch.setenv("LLM_API_KEY", "sk-test")
    script = [RuntimeError("connection refused")] * 3
    proposer = RemoteProposer(
        EndpointConfig(base_url="http://down.internal", samples_per_step=2, retries=2),
        transport=_fake_transport(script),
    )
    ps = proposer.propose("obs", *fresh_bits)
    assert ps.proposals == []
    assert ps.transport_failure is True


def test_remote_bounded_attempts(monkeypatch, fresh_bits):
    monkeypatch.setenv("LLM_API_KEY", "sk-test")
    script = [RuntimeError("timeout")] * 10
    transport = _fake_transport(script)
    proposer = RemoteProposer(
        EndpointConfig(base_url="http://slow.internal", samples_per_step=5, retries=1),
        transport=transport,
    )
    proposer.propose("obs", *fresh_bits)
    # first completion: 1 + retries attempts, then degrade; never more
    assert len(transport.calls) == 2


def test_remote_requires_credential(monkeypatch, fresh_bits):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    proposer = RemoteProposer(EndpointConfig(base_url="http://x", samples_per_step=1))
    ps = proposer.propose("obs", *fresh_bits)
    # missing credential is a transport-level failure, not a crash
    assert ps.transport_failure is True


def test_remote_fixture_transcript_golden(monkeypatch, fresh_bits, tmp_path):
    """Replaying a recorded transcript reproduces the hand-labeled proposal set."""
    monkeypatch.setenv("LLM_API_KEY", "sk-test")
    transcript = [
        "Both cooks are idle and the pot is empty.",
        "pickup_onion()",
        "pickup_onion()",
        "Pick Up Onion",
        "put_onion_in_pot",
        "grab_cheese",
    ]
    golden = [
        ("pickup_onion()", 0.4, "pickup_onion"),
        ("Pick Up Onion", 0.2, "pickup_onion"),
        ("put_onion_in_pot", 0.2, "put_onion_in_pot"),
        ("grab_cheese", 0.2, None),
    ]
    proposer = RemoteProposer(
        EndpointConfig(base_url="http://llm.internal", samples_per_step=5),
        transport=_fake_transport(list(transcript)),
    )
    ps = proposer.propose("obs", *fresh_bits)
    got = [(p.raw_text, p.p_a, p.canonical.value if p.canonical else None) for p in ps.proposals]
    assert got == golden
