"""Visual character-enhanced Chinese word embeddings."""

from ._vcwe import *  # noqa: F401,F403
from ._vcwe import (
    Embeddings,
    Trainer,
    TokenStream,
    Vocabulary,
    VcweError,
    normalize_text,
)


def prepare(text, min_count=1):
    """Normalize raw segmented text and return (vocab, stream)."""
    sentences = normalize_text(text)
    vocab = Vocabulary.build(sentences, min_count)
    return vocab, TokenStream.encode(sentences, vocab)


__all__ = [
    "Embeddings",
    "Trainer",
    "TokenStream",
    "Vocabulary",
    "VcweError",
    "normalize_text",
    "prepare",
]
