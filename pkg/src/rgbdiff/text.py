"""Text conditioning via pluggable embedding providers.

The default provider needs no external model: each token gets a fixed
vector drawn from an RNG seeded by hashing the token, so embeddings are
deterministic, distinct captions almost surely differ, and the empty
caption maps to a reserved null token that doubles as the unconditional
embedding for guidance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError
from .seeding import numpy_rng
from .validation import check_vector

UNCOND_TOKEN = "<uncond>"  # reserved; user tokens are alphanumeric only


@dataclass
class TextCondition:
    """A tokenized caption embedded as an (L, context_dim) array."""

    tokens_embedding: np.ndarray
    provider_id: str

    def __post_init__(self):
        arr = np.asarray(self.tokens_embedding, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise DataError(f"tokens_embedding must be (L>=1, dim), got {arr.shape}")
        check_vector(arr.ravel(), name="tokens_embedding")
        self.tokens_embedding = arr

    @property
    def length(self) -> int:
        return self.tokens_embedding.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens_embedding.shape[1]


def _tokenize(caption: str) -> list[str]:
    cleaned = "".join(c if c.isalnum() else " " for c in caption.lower())
    return cleaned.split()


class HashTextEncoder:
    """Seeded hash-based token embedding table. No learned parameters."""

    def __init__(self, context_dim: int = 32, provider_id: str = "hash-table"):
        if context_dim < 1:
            raise ConfigError(f"context_dim must be >= 1, got {context_dim}")
        self.context_dim = context_dim
        self.provider_id = provider_id

    def _token_vector(self, token: str) -> np.ndarray:
        rng = numpy_rng(0, "text-embed", self.provider_id, self.context_dim, token)
        return (rng.standard_normal(self.context_dim) / np.sqrt(self.context_dim)).astype(
            np.float32
        )

    def embed(self, caption: str) -> TextCondition:
        tokens = _tokenize(caption)
        if not tokens:
            tokens = [UNCOND_TOKEN]
        emb = np.stack([self._token_vector(t) for t in tokens])
        return TextCondition(tokens_embedding=emb, provider_id=self.provider_id)

    def unconditional(self) -> TextCondition:
        """The designated empty-caption embedding used for guidance and dropout."""
        return self.embed("")


def embed_text(caption: str, provider: HashTextEncoder) -> TextCondition:
    """Embed a caption; the empty string yields the unconditional embedding."""
    return provider.embed(caption)
