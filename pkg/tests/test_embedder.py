import numpy as np
import pytest
from hypothesis import given, strategies as st

from augkit.embedder import (SpeakerEmbedding, embed, encode_frames, gsp_pool, init_encoder, load_embeddings,
                             save_embeddings, xavier_bound)
from augkit.errors import DomainError, FormatError, TooShortError
from augkit import store

from .oracles import gsp_two_pass

PARAMS = init_encoder(0, 32)


def test_gsp_constant():
    out = gsp_pool(np.full((7, 3), 2.5))
    assert out.tolist() == [2.5] * 3 + [0.0] * 3


def test_gsp_two_points():
    assert gsp_pool([[0.0], [2.0]]).tolist() == [1.0, 1.0]


def test_gsp_single_frame():
    assert gsp_pool([[1.0, -2.0]]).tolist() == [1.0, -2.0, 0.0, 0.0]


def test_gsp_two_pass_oracle(rng):
    x = rng.normal(size=(10, 4))
    assert np.max(np.abs(gsp_pool(x) - gsp_two_pass(x))) <= 1e-12


def test_gsp_empty():
    with pytest.raises(DomainError):
        gsp_pool(np.zeros((0, 3)))


def test_init_deterministic():
    a, b = init_encoder(5), init_encoder(5)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))


def test_init_seed_changes_params():
    assert not np.array_equal(init_encoder(1).conv1_w, init_encoder(2).conv1_w)


def test_init_xavier_range():
    p = init_encoder(3)
    for w in (p.conv1_w, p.conv2_w):
        assert np.max(np.abs(w)) <= xavier_bound(w.shape[1] * w.shape[2], w.shape[0] * w.shape[2])
    assert np.max(np.abs(p.proj_w)) <= xavier_bound(p.proj_w.shape[1], p.proj_w.shape[0])


def test_params_read_only():
    with pytest.raises(ValueError):
        PARAMS.conv1_w[0, 0, 0] = 1.0


def test_embed_dims_independent_of_length(rng):
    a = embed(rng.normal(size=(20, 64)), PARAMS)
    b = embed(rng.normal(size=(57, 64)), PARAMS)
    assert a.dim == b.dim == 32


def test_embed_repeatable(rng):
    x = rng.normal(size=(30, 64))
    assert np.array_equal(embed(x, PARAMS).vector, embed(x, PARAMS).vector)


def test_time_reversal_mean_half(rng):
    x = rng.normal(size=(25, 6))
    assert np.array_equal(gsp_pool(x[::-1])[:6], gsp_pool(x)[:6])


def test_too_short():
    with pytest.raises(TooShortError):
        encode_frames(np.ones((12, 64)), PARAMS)
    assert encode_frames(np.ones((13, 64)), PARAMS).shape == (1, 128)


def test_zero_input_rejected():
    with pytest.raises(DomainError):
        embed(np.zeros((20, 64)), PARAMS)


def test_embedding_contract():
    with pytest.raises(DomainError):
        SpeakerEmbedding(np.zeros(4))
    with pytest.raises(DomainError):
        SpeakerEmbedding(np.array([1.0, np.nan]))


def test_store_round_trip(tmp_path, rng):
    vecs = rng.normal(size=(100, 16)).astype(np.float32)
    embs = [SpeakerEmbedding(v, f"u{i:03d}") for i, v in enumerate(vecs)]
    save_embeddings(tmp_path / "e.emb", embs)
    back = load_embeddings(tmp_path / "e.emb", {"u001": "spkA"})
    assert [e.utterance_id for e in back] == [e.utterance_id for e in embs]
    assert np.array_equal(np.array([e.vector for e in back]).astype(np.float32), vecs)
    assert np.array([e.vector for e in back]).astype(np.float32).tobytes() == vecs.tobytes()
    assert back[1].speaker_label == "spkA" and back[0].speaker_label is None


def test_store_mixed_dims_rejected(tmp_path):
    a = store.encode_store(["a"], [np.ones(4)])
    b = store.encode_store(["b"], [np.ones(5)])
    header = store._HEADER.pack(store.MAGIC, store.VERSION, 4, 2)
    blob = header + a[store._HEADER.size:] + b[store._HEADER.size:]
    (tmp_path / "m.emb").write_bytes(blob)
    with pytest.raises(FormatError):
        load_embeddings(tmp_path / "m.emb")


def test_store_empty(tmp_path):
    (tmp_path / "z.emb").write_bytes(store._HEADER.pack(store.MAGIC, store.VERSION, 8, 0))
    assert load_embeddings(tmp_path / "z.emb") == []


def test_store_zero_vector_rejected(tmp_path):
    store.write_store(tmp_path / "z.emb", ["a"], [np.zeros(4)])
    with pytest.raises(FormatError):
        load_embeddings(tmp_path / "z.emb")


@given(t=st.integers(1, 40), c=st.integers(1, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_gsp_dimension(t, c, seed):
    assert gsp_pool(np.random.default_rng(seed).normal(size=(t, c))).shape == (2 * c,)


@given(seed=st.integers(0, 2 ** 32 - 1), t=st.integers(1, 40))
def test_gsp_permutation_invariant(seed, t):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(t, 5)) * rng.uniform(0.01, 100)
    assert np.array_equal(gsp_pool(x[rng.permutation(t)]), gsp_pool(x))


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_embed_lipschitz_sane(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, 64))
    dx = rng.uniform(-1e-6, 1e-6, size=x.shape)
    assert np.max(np.abs(embed(x + dx, PARAMS).vector - embed(x, PARAMS).vector)) <= 1e-3


@given(seed=st.integers(0, 2 ** 32 - 1), enc_seed=st.integers(0, 2 ** 32 - 1))
def test_embed_pure(seed, enc_seed):
    x = np.random.default_rng(seed).normal(size=(16, 64))
    a = embed(x, init_encoder(enc_seed, 16)).vector
    b = embed(x, init_encoder(enc_seed, 16)).vector
    assert a.tobytes() == b.tobytes()
