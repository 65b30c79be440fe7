"""Text similarity used for skill selection and redundancy pruning.

The default is a deterministic token-set Jaccard over lowercased whitespace
tokens, which keeps offline runs reproducible. Cosine over embeddings is
available when an embedder is configured.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

SimilarityFn = Callable[[str, str], float]


def _tokens(text: str) -> frozenset[str]:
    return frozenset(text.lower().split())


def jaccard_similarity(a: str, b: str) -> float:
    ta, tb = _tokens(a), _tokens(b)
    if not ta and not tb:
        return 1.0
    union = ta | tb
    if not union:
        return 0.0
    return len(ta & tb) / len(union)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(u, v))
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(y * y for y in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def embedding_similarity(embed: Callable[[str], Sequence[float]]) -> SimilarityFn:
    """Wrap an embedding function into a cosine similarity on texts."""

    def sim(a: str, b: str) -> float:
        return cosine(embed(a), embed(b))

    return sim
