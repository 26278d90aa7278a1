"""Token-level similarity between two signatures."""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from .signatures import tokenize

METRICS = ("cosine", "jaccard", "dice", "overlap")


def _tokens(sig: str | Sequence[str]) -> list[str]:
    return tokenize(sig) if isinstance(sig, str) else list(sig)


def cosine(a: Sequence[str], b: Sequence[str]) -> float:
    """Cosine of the token-frequency vectors."""
    ca, cb = Counter(a), Counter(b)
    dot = sum(n * cb[t] for t, n in ca.items())
    # integer product under one sqrt: equal multisets give exactly 1.0
    norm = math.sqrt(sum(n * n for n in ca.values()) * sum(n * n for n in cb.values()))
    return min(1.0, dot / norm)


def jaccard(a: Sequence[str], b: Sequence[str]) -> float:
    sa, sb = set(a), set(b)
    return len(sa & sb) / len(sa | sb)


def dice(a: Sequence[str], b: Sequence[str]) -> float:
    sa, sb = set(a), set(b)
    return 2 * len(sa & sb) / (len(sa) + len(sb))


def overlap(a: Sequence[str], b: Sequence[str]) -> float:
    sa, sb = set(a), set(b)
    return len(sa & sb) / min(len(sa), len(sb))


_FUNCS = {"cosine": cosine, "jaccard": jaccard, "dice": dice, "overlap": overlap}


def similarity(sig_a: str | Sequence[str], sig_b: str | Sequence[str], metric: str = "cosine") -> float:
    """Similarity in [0, 1]; two empty signatures are identical, one empty is 0."""
    try:
        func = _FUNCS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}") from None
    a, b = _tokens(sig_a), _tokens(sig_b)
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return func(a, b)
