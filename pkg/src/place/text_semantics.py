"""Prompts, token-to-class mapping, and the learned token embedding table.

Prompts are built by joining the names of the classes present in a map,
in ascending class-index order, then splitting on spaces; every word of
a multi-word class name maps to that class's channel. Token embeddings
come from a trainable table; index 0 is the reserved null token used for
unconditional prompts and padding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor
from .semantic_map import SemanticMap, present_classes

__all__ = [
    "NULL_INDEX",
    "Vocabulary",
    "WordNotInVocabulary",
    "IndexOutOfRange",
    "build_prompt",
    "embed_prompt",
    "unconditional_prompt",
    "vocabulary_for_classes",
]

NULL_INDEX = 0

Prompt = tuple  # token indices
TokenClassMap = tuple  # per-token class index or None


class WordNotInVocabulary(KeyError):
    pass


class IndexOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Word list with stable indices; index 0 is the null token."""

    words: tuple[str, ...]
    embedding_dim: int = 64

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        if not self.words or self.words[NULL_INDEX] != "":
            raise ValueError("index 0 must be the empty null token")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")
        object.__setattr__(self, "words", tuple(self.words))

    def __len__(self) -> int:
        return len(self.words)

    def index(self, word: str) -> int:
        try:
            return self.words.index(word)
        except ValueError:
            raise WordNotInVocabulary(word) from None


def vocabulary_for_classes(class_names, extra_words=(), embedding_dim: int = 64) -> Vocabulary:
    """Vocabulary covering every word of every class name, plus extras."""
    words = [""]
    for name in list(class_names) + list(extra_words):
        for word in name.split(" "):
            if word and word not in words:
                words.append(word)
    return Vocabulary(words=tuple(words), embedding_dim=embedding_dim)


def build_prompt(smap: SemanticMap, vocab: Vocabulary) -> tuple[Prompt, TokenClassMap]:
    """Prompt and token-class map for the classes present in a map.

    Depends only on the set of present classes, so permuting pixels leaves
    the result unchanged.
    """
    tokens: list[int] = []
    classes: list[Optional[int]] = []
    for cls in present_classes(smap):
        for word in smap.classes[cls].split(" "):
            tokens.append(vocab.index(word))
            classes.append(cls)
    return tuple(tokens), tuple(classes)


def extend_prompt(prompt: Prompt, tcm: TokenClassMap, extra_words, vocab: Vocabulary):
    """Append free-form words (styles, attributes) after the class words."""
    tokens = list(prompt)
    classes = list(tcm)
    for phrase in extra_words:
        for word in phrase.split(" "):
            if word:
                tokens.append(vocab.index(word))
                classes.append(None)
    return tuple(tokens), tuple(classes)


def unconditional_prompt() -> tuple[Prompt, TokenClassMap]:
    """Single-null-token prompt for classifier-free guidance."""
    return (NULL_INDEX,), (None,)


def embed_prompt(prompt: Prompt, vocab: Vocabulary, table: Tensor) -> Tensor:
    """Look up one table row per token; differentiable w.r.t. the table."""
    if table.data.shape != (len(vocab), vocab.embedding_dim):
        raise ValueError(
            f"table shape {table.data.shape} does not match vocabulary "
            f"({len(vocab)}, {vocab.embedding_dim})"
        )
    idx = np.asarray(prompt, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("prompt must contain at least one token")
    if idx.min() < 0 or idx.max() >= len(vocab):
        raise IndexOutOfRange(f"token indices {prompt} outside vocabulary of {len(vocab)}")
    return table.take_rows(idx)
