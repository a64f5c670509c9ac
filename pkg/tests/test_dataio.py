import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogclear.dataio import (
    SampleSet,
    SplitSpec,
    SyntheticConfig,
    build_samples,
    clean_replay,
    generate_corpus,
    generate_synthetic_replay,
    parse_frame_log,
    read_shard,
    serialize_frame,
    split_by_replay,
    write_shard,
)
from fogclear.errors import FormatError, FrameError, InvalidArgument, ParseError
from fogclear.gamestate import N_A_TYPES, Frame, UnitInstance, load_registry

TABLE = load_registry()
SMALL = SyntheticConfig(num_replays=3, frames_per_replay=12, upgrade_frame=5, seed=11)


def record(**over):
    rec = {"replay_id": "r1", "t": 6, "winner": "A",
           "units": [{"type": 1, "owner": "A", "x": 10, "y": 20},
                     {"type": 40, "owner": "B", "x": 4000, "y": 3000}]}
    rec.update(over)
    return json.dumps(rec)


# --- frame logs --------------------------------------------------------------

def test_parse_empty():
    assert parse_frame_log([]) == []


def test_parse_roundtrip():
    frames = parse_frame_log([record()])
    assert len(frames) == 1 and len(frames[0].units) == 2
    again = parse_frame_log([serialize_frame(frames[0])])
    assert again == frames


def test_parse_x_boundary_names_field_and_line():
    bad = record(units=[{"type": 1, "owner": "A", "x": 4096, "y": 0}])
    with pytest.raises(FrameError) as exc:
        parse_frame_log([bad])
    assert exc.value.field == "x" and exc.value.line == 1
    assert "line 1" in str(exc.value) and "x=4096" in str(exc.value)


def test_parse_malformed_json_line_number():
    with pytest.raises(ParseError) as exc:
        parse_frame_log([record(), "{not json"])
    assert exc.value.line == 2


@pytest.mark.parametrize("text,field", [
    (record(t="6"), "t"),
    (record(extra=1), "extra"),
    (record(units=[{"type": 1, "owner": "A", "x": 1}]), "y"),
    (record(units=[{"type": 1.5, "owner": "A", "x": 1, "y": 1}]), "type"),
    (record(replay_id=""), "replay_id"),
])
def test_parse_errors_name_field(text, field):
    with pytest.raises(ParseError) as exc:
        parse_frame_log(["", text])
    assert exc.value.field == field and exc.value.line == 2


def test_parse_rejects_bad_timestamp_and_type():
    with pytest.raises(FrameError, match="multiple of 3"):
        parse_frame_log([record(t=7)])
    with pytest.raises(FrameError):
        parse_frame_log([record(units=[{"type": 66, "owner": "B", "x": 1, "y": 1}])])


@st.composite
def frames(draw):
    units = []
    for _ in range(draw(st.integers(0, 8))):
        tid = draw(st.integers(0, 65))
        units.append(UnitInstance(tid, TABLE.race_of(tid), draw(st.integers(0, 4095)), draw(st.integers(0, 4095))))
    return Frame(draw(st.text(min_size=1, max_size=12)), 3 * draw(st.integers(0, 10_000)),
                 tuple(units), draw(st.sampled_from(["A", "B"])))


@settings(max_examples=100, deadline=None)
@given(frames())
def test_serialize_parse_roundtrip_property(frame):
    assert parse_frame_log([serialize_frame(frame)]) == [frame]


# --- synthetic replays -------------------------------------------------------

def test_synthetic_deterministic():
    assert generate_synthetic_replay(SMALL, 1) == generate_synthetic_replay(SMALL, 1)
    assert generate_synthetic_replay(SMALL, 1) != generate_synthetic_replay(SMALL, 2)


def test_synthetic_timestamps():
    cfg = SyntheticConfig(frames_per_replay=10, seed=3)
    assert [f.t_seconds for f in generate_synthetic_replay(cfg, 0)] == list(range(0, 30, 3))


@pytest.mark.parametrize("index", range(4))
def test_synthetic_winner_matches_retally(index):
    frames_ = generate_synthetic_replay(SMALL, index)
    totals = {"A": 0.0, "B": 0.0}
    for u in frames_[-1].units:
        totals[u.owner] += TABLE[u.type_id].combat_value
    expected = "A" if totals["A"] >= totals["B"] else "B"
    assert {f.winner for f in frames_} == {expected}


def test_synthetic_frames_valid():
    from fogclear.gamestate import validate_frame
    for f in generate_synthetic_replay(SMALL, 0):
        validate_frame(f, TABLE)


def test_clean_replay_skips():
    frames_ = generate_synthetic_replay(SMALL, 0)
    kept = clean_replay(frames_, SMALL)
    assert [f.t_seconds for f in kept] == [f.t_seconds for f in frames_[2:-2]]
    corpus = generate_corpus(SMALL)
    assert len(corpus) == 3 * (12 - 4)


def test_synthetic_config_validation():
    with pytest.raises(InvalidArgument):
        SyntheticConfig(units_per_side=(0, 10))
    with pytest.raises(InvalidArgument):
        SyntheticConfig(scout_probability=1.5)


# --- split ---------------------------------------------------------------

def test_split_ten_replays():
    ids = [f"r{i}" for i in range(10)]
    train, val = split_by_replay(ids, SplitSpec(0.9, seed=1))
    assert len(train) == 9 and len(val) == 1
    assert not set(train) & set(val)
    assert set(train) | set(val) == set(ids)


def test_split_needs_two_replays():
    with pytest.raises(InvalidArgument):
        split_by_replay(["only"], SplitSpec())


def test_split_determinism():
    ids = [f"r{i}" for i in range(20)]
    assert split_by_replay(ids, SplitSpec(0.5, 3)) == split_by_replay(ids, SplitSpec(0.5, 3))
    partitions = {tuple(split_by_replay(ids, SplitSpec(0.5, s))[0]) for s in range(5)}
    assert len(partitions) > 1


def test_split_accepts_frames():
    corpus = generate_corpus(SMALL)
    train, val = split_by_replay(corpus, SplitSpec(0.5, 0))
    assert len(train) + len(val) == 3


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(min_size=1, max_size=5), min_size=2, max_size=40, unique=True),
       st.floats(0.01, 0.99), st.integers(0, 2**63 - 1))
def test_split_disjoint_property(ids, fraction, seed):
    train, val = split_by_replay(ids, SplitSpec(fraction, seed))
    assert not set(train) & set(val)
    assert sorted(train + val) == sorted(ids)
    assert train and val


# --- samples / shards ----------------------------------------------------

@pytest.fixture(scope="module")
def small_samples():
    return build_samples(generate_corpus(SMALL), TABLE)


def test_samples_fog_contract(small_samples):
    assert np.all(small_samples.x <= small_samples.y)
    np.testing.assert_array_equal(small_samples.x[:, :N_A_TYPES], small_samples.y[:, :N_A_TYPES])
    assert small_samples.x[:, N_A_TYPES:].sum() < small_samples.y[:, N_A_TYPES:].sum()


def test_sample_without_visible_enemy():
    frame = Frame("r", 0, (UnitInstance(1, "A", 100, 100), UnitInstance(40, "B", 4000, 4000)), "B")
    s = build_samples([frame], TABLE)
    assert not s.x[0, N_A_TYPES:].any()
    assert s.y[0, 40].sum() == 1


def test_shard_roundtrip(small_samples, tmp_path):
    path = tmp_path / "d.fogd"
    write_shard(small_samples, path)
    back = read_shard(path)
    assert back.winners == small_samples.winners
    assert back.replay_ids == small_samples.replay_ids
    np.testing.assert_array_equal(back.t_seconds, small_samples.t_seconds)
    assert back.x.tobytes() == small_samples.x.tobytes()
    assert back.y.tobytes() == small_samples.y.tobytes()


def test_shard_roundtrip_sample_list(small_samples, tmp_path):
    path = tmp_path / "d.fogd"
    write_shard([small_samples[0], small_samples[3]], path)
    back = read_shard(path)
    assert len(back) == 2 and back[1].replay_id == small_samples[3].replay_id


def test_shard_bad_magic(small_samples, tmp_path):
    path = tmp_path / "d.fogd"
    write_shard(small_samples[:2], path)
    data = bytearray(path.read_bytes())
    data[0:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError) as exc:
        read_shard(path)
    assert exc.value.offset == 0


def test_shard_bad_version_and_truncation(small_samples, tmp_path):
    path = tmp_path / "d.fogd"
    write_shard(small_samples[:2], path)
    good = path.read_bytes()
    path.write_bytes(good[:4] + (7).to_bytes(4, "little") + good[8:])
    with pytest.raises(FormatError) as exc:
        read_shard(path)
    assert exc.value.offset == 4
    path.write_bytes(good[:-10])
    with pytest.raises(FormatError, match="truncated|declares"):
        read_shard(path)


def test_sampleset_select_replays(small_samples):
    rid = small_samples.replay_ids[0]
    sub = small_samples.select_replays([rid])
    assert set(sub.replay_ids) == {rid} and len(sub) == 8
    assert isinstance(sub, SampleSet)
