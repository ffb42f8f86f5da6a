import numpy as np
import pytest

import rgbdiff as rd
from rgbdiff.text import UNCOND_TOKEN, _tokenize


class TestHashTextEncoder:
    def test_same_caption_identical(self):
        enc = rd.HashTextEncoder(16)
        a = rd.embed_text("a 360 view of a field", enc)
        b = rd.embed_text("a 360 view of a field", enc)
        assert np.array_equal(a.tokens_embedding, b.tokens_embedding)

    def test_empty_caption_is_unconditional(self):
        enc = rd.HashTextEncoder(16)
        empty = rd.embed_text("", enc)
        assert np.array_equal(empty.tokens_embedding,
                              enc.unconditional().tokens_embedding)
        assert empty.length == 1

    def test_distinct_captions_differ(self):
        # hash-collision check over a small vocabulary: all pairwise distinct
        enc = rd.HashTextEncoder(24)
        words = [f"word{i}" for i in range(150)]
        embs = [enc.embed(w).tokens_embedding[0] for w in words]
        stacked = np.stack(embs)
        for i in range(len(words)):
            diffs = np.abs(stacked - stacked[i]).max(axis=1)
            diffs[i] = np.inf
            assert diffs.min() > 1e-6

    def test_shape_and_length(self):
        enc = rd.HashTextEncoder(8)
        cond = enc.embed("three word caption")
        assert cond.tokens_embedding.shape == (3, 8)
        assert cond.dim == 8

    def test_tokenization_folds_case_and_punctuation(self):
        enc = rd.HashTextEncoder(8)
        a = enc.embed("A Field, at Night!")
        b = enc.embed("a field at night")
        assert np.array_equal(a.tokens_embedding, b.tokens_embedding)

    def test_uncond_token_cannot_collide_with_user_tokens(self):
        # user tokens are alphanumeric; the reserved token is not reachable
        assert _tokenize(UNCOND_TOKEN) == ["uncond"]
        enc = rd.HashTextEncoder(8)
        user = enc.embed("uncond")
        assert not np.array_equal(user.tokens_embedding,
                                  enc.unconditional().tokens_embedding)

    def test_provider_id_changes_embeddings(self):
        a = rd.HashTextEncoder(8, "hash-table").embed("scene")
        b = rd.HashTextEncoder(8, "other-table").embed("scene")
        assert not np.array_equal(a.tokens_embedding, b.tokens_embedding)

    def test_condition_validation(self):
        with pytest.raises(rd.DataError):
            rd.TextCondition(tokens_embedding=np.zeros((0, 4)), provider_id="x")
        with pytest.raises(rd.DataError):
            rd.TextCondition(tokens_embedding=np.full((1, 4), np.nan), provider_id="x")
