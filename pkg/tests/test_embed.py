import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semidrec.embed import (
    HashingEmbedder, PrecomputedEmbedder, load_embeddings, save_embeddings, tokenize,
)
from semidrec.errors import DataError


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestHashingEmbedder:
    def test_empty_text_is_zero_vector(self):
        emb = HashingEmbedder(dim=16)
        assert np.array_equal(emb.embed_text(""), np.zeros(16))
        assert np.array_equal(emb.embed_text(" ,.!"), np.zeros(16))

    def test_deterministic(self):
        emb = HashingEmbedder(dim=32, seed=3)
        assert np.array_equal(emb.embed_text("great hair dye"),
                              emb.embed_text("great hair dye"))

    def test_nonzero_vectors_are_unit_norm(self):
        emb = HashingEmbedder(dim=32)
        assert np.linalg.norm(emb.embed_text("one two three")) == pytest.approx(1.0)

    def test_seed_changes_vectors(self):
        a = HashingEmbedder(dim=32, seed=0).embed_text("hello world")
        b = HashingEmbedder(dim=32, seed=1).embed_text("hello world")
        assert not np.array_equal(a, b)

    def test_word_order_is_ignored(self):
        emb = HashingEmbedder(dim=64)
        words = ["alpha", "beta", "gamma", "delta", "epsilon"]
        base = emb.embed_text(" ".join(words))
        rng = np.random.default_rng(0)
        for _ in range(20):
            perm = [words[i] for i in rng.permutation(len(words))]
            assert np.array_equal(emb.embed_text(" ".join(perm)), base)

    def test_shared_token_raises_similarity(self):
        emb = HashingEmbedder(dim=64)
        hair_dye = emb.embed_text("hair dye")
        assert cosine(hair_dye, emb.embed_text("hair color")) > \
            cosine(hair_dye, emb.embed_text("xbox controller"))

    @settings(max_examples=30, deadline=None)
    @given(st.text(max_size=80))
    def test_outputs_always_finite(self, text):
        vec = HashingEmbedder(dim=16).embed_text(text)
        assert vec.shape == (16,)
        assert np.all(np.isfinite(vec))


def test_tokenize_lowercases_and_splits():
    assert tokenize("Great-Value, HAIR dye 2x!") == ["great", "value", "hair", "dye", "2x"]


class TestPrecomputed:
    def test_lookup_and_missing_key(self):
        emb = PrecomputedEmbedder({"u1": np.ones(4)})
        assert np.array_equal(emb.embed_text("u1"), np.ones(4))
        with pytest.raises(KeyError, match="u2"):
            emb.embed_text("u2")

    def test_inconsistent_dimensions_rejected(self):
        with pytest.raises(DataError):
            PrecomputedEmbedder({"a": np.ones(3), "b": np.ones(4)})


class TestTsvBridge:
    def test_round_trip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(5)
        vectors = {f"k{i}": rng.standard_normal(8) for i in range(5)}
        vectors["tiny"] = np.full(8, 1e-17)
        path = tmp_path / "vecs.tsv"
        save_embeddings(path, vectors, dim=8)
        loaded = load_embeddings(path)
        assert set(loaded) == set(vectors)
        for key, vec in vectors.items():
            assert np.array_equal(loaded[key], vec), key

    def test_header_declares_dimension(self, tmp_path):
        path = tmp_path / "vecs.tsv"
        save_embeddings(path, {"a": np.zeros(3)}, dim=3)
        assert path.read_text().splitlines()[0] == "D=3"

    def test_missing_header_is_fatal(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\t1.0,2.0\n")
        with pytest.raises(DataError, match="header"):
            load_embeddings(path)

    def test_row_dimension_mismatch_is_fatal(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("D=3\na\t1.0,2.0\n")
        with pytest.raises(DataError, match="D=3"):
            load_embeddings(path)

    def test_non_finite_entry_is_fatal(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("D=2\na\t1.0,nan\n")
        with pytest.raises(DataError, match="non-finite"):
            load_embeddings(path)

    def test_wrong_shape_on_save_is_fatal(self, tmp_path):
        with pytest.raises(DataError):
            save_embeddings(tmp_path / "x.tsv", {"a": np.zeros(2)}, dim=3)
