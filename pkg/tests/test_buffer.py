import hashlib
import json

import numpy as np
import pytest

from causalchef.buffer import (
    Buffer,
    BufferFormatError,
    TimestepRecord,
    collect_buffer,
    load_buffer,
    relabel_movement,
    save_buffer,
)
from causalchef.policies import PolicySpec


def _small_buffer(cr_layout, cr_schema, episodes=4, horizon=30, seed=7, seats="both"):
    policy = PolicySpec(kind="greedy_chef", epsilon=0.1)
    return collect_buffer(cr_layout, policy, episodes, horizon, seed, cr_schema, seats=seats)


def test_collect_record_count(cr_layout, cr_schema):
    buf = _small_buffer(cr_layout, cr_schema, episodes=4, horizon=30)
    assert len(buf) + buf.meta["dropped"] == 4 * 30
    assert buf.meta["T"] == 30
    assert buf.meta["N"] == len(buf)


def test_collect_single_step_sentinel(cr_layout, cr_schema):
    buf = _small_buffer(cr_layout, cr_schema, episodes=1, horizon=1, seats="0")
    assert len(buf) == 1
    record = buf.records[0]
    assert record.t == 1
    assert record.prev_action.sum() == 0
    assert record.action.sum() == 1


def test_collect_prev_action_chaining(cr_layout, cr_schema):
    buf = _small_buffer(cr_layout, cr_schema, episodes=6, horizon=50)
    by_episode: dict[int, list[TimestepRecord]] = {}
    for record in buf.records:
        by_episode.setdefault(record.episode, []).append(record)
    for records in by_episode.values():
        records.sort(key=lambda r: r.t)
        assert records[0].prev_action.sum() == 0
        for prev, cur in zip(records, records[1:]):
            assert np.array_equal(cur.prev_action, prev.action)


def test_collect_pools_both_seats(cr_layout, cr_schema):
    buf = _small_buffer(cr_layout, cr_schema, episodes=4, horizon=20, seats="both")
    episodes = {r.episode for r in buf.records}
    assert episodes == {0, 1, 2, 3}
    # odd episode indices are seat 1 of the same simulated game as the preceding even index
    single = _small_buffer(cr_layout, cr_schema, episodes=2, horizon=20, seats="0")
    assert {r.episode for r in single.records} == {0, 1}


def test_collect_deterministic(cr_layout, cr_schema, tmp_path):
    a = _small_buffer(cr_layout, cr_schema, episodes=4, horizon=40, seed=13)
    b = _small_buffer(cr_layout, cr_schema, episodes=4, horizon=40, seed=13)
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_buffer(a, str(pa))
    save_buffer(b, str(pb))
    ha = hashlib.sha256(pa.read_bytes()).hexdigest()
    hb = hashlib.sha256(pb.read_bytes()).hexdigest()
    assert ha == hb
    c = _small_buffer(cr_layout, cr_schema, episodes=4, horizon=40, seed=14)
    pc = tmp_path / "c.jsonl"
    save_buffer(c, str(pc))
    assert hashlib.sha256(pc.read_bytes()).hexdigest() != ha


def test_collect_actions_are_schema_actions(cr_layout, cr_schema):
    buf = _small_buffer(cr_layout, cr_schema, episodes=4, horizon=40)
    for record in buf.records:
        assert record.action.sum() == 1
        assert record.state.shape == (cr_schema.state_dim,)


def test_relabel_movement_example(cr_schema):
    state = np.zeros(cr_schema.state_dim, dtype=np.uint8)
    raw = [
        (state, "pickup_onion"),
        (state, "move_north"),
        (state, "move_east"),
        (state, "put_onion_in_pot"),
    ]
    records, dropped = relabel_movement(raw, cr_schema)
    assert dropped == 0
    labels = [cr_schema.action_features[int(np.argmax(r.action))] for r in records]
    assert labels == ["pickup_onion", "pickup_onion", "pickup_onion", "put_onion_in_pot"]
    # original states retained unchanged
    assert all(np.array_equal(r.state, state) for r in records)


def test_relabel_no_movement_identity(cr_schema):
    state = np.zeros(cr_schema.state_dim, dtype=np.uint8)
    raw = [(state, "pickup_onion"), (state, "put_onion_in_pot")]
    records, dropped = relabel_movement(raw, cr_schema)
    assert dropped == 0
    labels = [cr_schema.action_features[int(np.argmax(r.action))] for r in records]
    assert labels == ["pickup_onion", "put_onion_in_pot"]


def test_relabel_leading_movement_dropped(cr_schema):
    state = np.zeros(cr_schema.state_dim, dtype=np.uint8)
    raw = [(state, "move_west"), (state, "interact"), (state, "pickup_dish"), (state, "move_east")]
    records, dropped = relabel_movement(raw, cr_schema)
    assert dropped == 2
    assert len(records) == 2


def test_relabel_random_interleaving_property(cr_schema, rng):
    """Output has no movement actions and preserves length minus dropped prefix."""
    state = np.zeros(cr_schema.state_dim, dtype=np.uint8)
    high = list(cr_schema.action_features)
    movement = ["move_n", "move_s", "move_e", "move_w", "stay"]
    for _ in range(50):
        raw = []
        for _ in range(40):
            pool = high if rng.random() < 0.4 else movement
            raw.append((state, pool[int(rng.integers(len(pool)))]))
        records, dropped = relabel_movement(raw, cr_schema)
        # independent scan: leading movement prefix length
        prefix = 0
        for _, name in raw:
            if name in high:
                break
            prefix += 1
        assert dropped == prefix
        assert len(records) == len(raw) - prefix
        for record in records:
            assert record.action.sum() == 1  # always a real schema action
        for prev, cur in zip(records, records[1:]):
            assert np.array_equal(cur.prev_action, prev.action)


def test_save_load_round_trip(cr_layout, cr_schema, tmp_path):
    buf = _small_buffer(cr_layout, cr_schema, episodes=3, horizon=25)
    path = tmp_path / "buffer.jsonl"
    save_buffer(buf, str(path))
    loaded = load_buffer(str(path), schema=cr_schema)
    assert loaded.meta == buf.meta
    assert len(loaded) == len(buf)
    for a, b in zip(loaded.records, buf.records):
        assert a.episode == b.episode and a.t == b.t
        assert np.array_equal(a.state, b.state)
        assert np.array_equal(a.prev_action, b.prev_action)
        assert np.array_equal(a.action, b.action)


def test_load_malformed_line_reports_lineno(tmp_path, cr_schema):
    path = tmp_path / "bad.jsonl"
    path.write_text('#META {"state_dim": 14, "action_dim": 7}\n{"episode": 0, "t": 1, "state": [0]}\n')
    with pytest.raises(BufferFormatError) as err:
        load_buffer(str(path))
    assert err.value.line == 2


def test_load_dimension_mismatch_rejected(tmp_path, cr_schema, cr_layout):
    buf = _small_buffer(cr_layout, cr_schema, episodes=1, horizon=5)
    path = tmp_path / "buffer.jsonl"
    save_buffer(buf, str(path))
    from causalchef import schema_for_pots

    with pytest.raises(BufferFormatError):
        load_buffer(str(path), schema=schema_for_pots(2))


def test_load_truncated_record(tmp_path, cr_layout, cr_schema):
    buf = _small_buffer(cr_layout, cr_schema, episodes=1, horizon=5)
    path = tmp_path / "buffer.jsonl"
    save_buffer(buf, str(path))
    text = path.read_text()
    path.write_text(text[: len(text) - 20])
    with pytest.raises(BufferFormatError):
        load_buffer(str(path))


def test_buffer_arrays_shapes(cr_layout, cr_schema):
    buf = _small_buffer(cr_layout, cr_schema, episodes=2, horizon=10)
    states, prev, actions = buf.arrays()
    assert states.shape == (len(buf), 14)
    assert prev.shape == (len(buf), 7)
    assert actions.shape == (len(buf), 7)
    assert states.dtype == np.float64
