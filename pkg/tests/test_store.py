import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from augkit import store
from augkit.errors import DataError, FormatError
from augkit.store import AugmentationRecord, ManifestEntry, Trial

ids = st.text(st.characters(blacklist_categories=("Cs",)), min_size=0, max_size=20)


@given(names=st.lists(ids, max_size=20, unique=True), dim=st.integers(1, 16), seed=st.integers(0, 2 ** 32 - 1))
def test_store_round_trip(names, dim, seed):
    vecs = np.random.default_rng(seed).normal(size=(len(names), dim)).astype(np.float32)
    blob = store.encode_store(names, vecs)
    got_ids, got = store.decode_store(blob)
    assert got_ids == names
    assert got.astype(np.float32).tobytes() == vecs.tobytes()
    assert store.encode_store(got_ids, got) == blob


def test_store_header_layout():
    blob = store.encode_store(["ab"], [np.array([1.0, 2.0])])
    assert blob[:4] == b"EMB1"
    assert blob == b"EMB1" + (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + (1).to_bytes(8, "little") \
        + (2).to_bytes(2, "little") + b"ab" + np.array([1.0, 2.0], "<f4").tobytes()


@pytest.mark.parametrize("mutate", [
    lambda b: b"EMB2" + b[4:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b[:10],
])
def test_store_corruption(mutate):
    blob = store.encode_store(["a", "b"], np.ones((2, 3)))
    with pytest.raises(FormatError):
        store.decode_store(mutate(blob))


def test_store_duplicate_ids():
    with pytest.raises(FormatError):
        store.decode_store(store.encode_store(["a", "b"], np.ones((2, 3))).replace(b"\x01\x00b", b"\x01\x00a"))


def test_store_atomic_write(tmp_path):
    store.write_store(tmp_path / "x.emb", ["a"], [np.ones(2)])
    assert [p.name for p in tmp_path.iterdir()] == ["x.emb"]


def test_manifest_round_trip(tmp_path):
    entries = [ManifestEntry("u1", "s1", "a/u1.wav", "ph"), ManifestEntry("u2", "s1#sp0.9", "b.wav", "ph",
                                                                         "pitch_shift")]
    store.write_manifest(tmp_path / "m.jsonl", entries)
    assert store.read_manifest(tmp_path / "m.jsonl") == entries
    line = json.loads((tmp_path / "m.jsonl").read_text().splitlines()[0])
    assert set(line) == {"utt_id", "speaker_label", "audio_path", "phrase_id", "origin"}


def test_manifest_duplicate(tmp_path):
    with pytest.raises(DataError):
        store.write_manifest(tmp_path / "m.jsonl", [ManifestEntry("u", "s", "a")] * 2)


def test_manifest_bad_origin():
    with pytest.raises(DataError):
        ManifestEntry("u", "s", "a", origin="magic")


@pytest.mark.parametrize("line", ['{"utt_id": "u"}', "not json", '{"utt_id":"u","speaker_label":"s",'
                                                                   '"audio_path":"a","bogus":1}'])
def test_manifest_bad_lines(tmp_path, line):
    (tmp_path / "m.jsonl").write_text(line + "\n")
    with pytest.raises(FormatError):
        store.read_manifest(tmp_path / "m.jsonl")


def test_records_round_trip(tmp_path):
    recs = [AugmentationRecord("u1", "pitch_shift", "0.9", None, True, "u1#sp0.9"),
            AugmentationRecord("u2", "vc_in_set", "s3", 0.25, False, "s3#vc000")]
    path = store.aug_log_path(tmp_path / "m.jsonl")
    assert path.name == "m.jsonl.aug.jsonl"
    store.write_records(path, recs)
    assert store.read_records(path) == recs


@given(rows=st.lists(st.tuples(st.text("abc_#1", min_size=1, max_size=6), st.text("xyz.2", min_size=1, max_size=6),
                               st.booleans()), max_size=30))
def test_trial_round_trip(rows):
    import tempfile
    from pathlib import Path
    trials = [Trial(*r) for r in rows]
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "t.txt"
        store.write_trials(p, trials)
        assert store.read_trials(p) == trials
        assert p.read_text() == store.format_trials(trials)


def test_trial_bad_line(tmp_path):
    (tmp_path / "t.txt").write_text("a b maybe\n")
    with pytest.raises(FormatError):
        store.read_trials(tmp_path / "t.txt")


def test_scores(tmp_path):
    trials = [Trial("a", "b", True), Trial("a", "c", False)]
    store.write_scores(tmp_path / "s.txt", trials, [0.5, -0.1234567])
    assert (tmp_path / "s.txt").read_text() == "a b 0.500000\na c -0.123457\n"
    assert store.read_scores(tmp_path / "s.txt") == [("a", "b", 0.5), ("a", "c", -0.123457)]
    (tmp_path / "bad.txt").write_text("a b x\n")
    with pytest.raises(FormatError):
        store.read_scores(tmp_path / "bad.txt")


def test_enrollments(tmp_path):
    (tmp_path / "e.txt").write_text("spk u1 u2\nspk u3\nother u9\n")
    assert store.read_enrollments(tmp_path / "e.txt") == {"spk": ["u1", "u2", "u3"], "other": ["u9"]}
    (tmp_path / "bad.txt").write_text("lonely\n")
    with pytest.raises(FormatError):
        store.read_enrollments(tmp_path / "bad.txt")
