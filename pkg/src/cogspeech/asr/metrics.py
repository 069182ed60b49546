"""Character error rate via Levenshtein distance."""

from __future__ import annotations

from typing import Sequence

from ..errors import UndefinedMetricError


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit insert/delete/substitute costs (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        curr = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost)
        prev = curr
    return prev[-1]


def cer(reference: Sequence, hypothesis: Sequence) -> float:
    """Edit distance divided by reference length; may exceed 1.0."""
    if len(reference) == 0:
        raise UndefinedMetricError("CER is undefined for an empty reference")
    return levenshtein(reference, hypothesis) / len(reference)


def corpus_cer(pairs: Sequence[tuple[Sequence, Sequence]]) -> float:
    """Pooled CER: total edit distance over total reference length."""
    total_ref = sum(len(ref) for ref, _ in pairs)
    if total_ref == 0:
        raise UndefinedMetricError("CER is undefined for empty references")
    total_dist = sum(levenshtein(ref, hyp) for ref, hyp in pairs)
    return total_dist / total_ref
