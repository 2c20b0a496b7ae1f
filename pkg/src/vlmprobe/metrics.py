"""Reply normalization and scoring: GPM, exact match, inclusion match."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import kernels

_WS_RUN = re.compile(r"\s+")
_DIGIT_RUN = re.compile(r"[0-9]+")


class EmptyTruth(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    gpm: float
    exact: int
    inclusion: int
    normalized_prediction: str
    extracted_answer: str


def normalize(text: str) -> str:
    """Lowercase, trim, collapse whitespace, drop terminal punctuation."""
    out = _WS_RUN.sub(" ", text.strip()).lower()
    while out and out[-1] in ".,!?":
        out = out[:-1].rstrip()
    return out


def extract_answer_token(normalized_prediction: str) -> str:
    """Longest maximal digit run (leftmost on ties); the whole string if none."""
    runs = _DIGIT_RUN.findall(normalized_prediction)
    if not runs:
        return normalized_prediction
    return max(runs, key=len)  # max() keeps the first of equal-length runs


def gpm(a: str, b: str) -> float:
    """Ratcliff-Obershelp similarity 2*K/(|a|+|b|).

    K sums the lengths of matches found by repeatedly taking the longest
    common substring (ties: earliest start in `a`, then in `b`) and recursing
    into the left and right remainders. Both strings empty -> 1.0.
    """
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    ca = np.frombuffer(a.encode("utf-32-le"), dtype=np.uint32)
    cb = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    k = kernels.gpm_match_total(ca, cb)
    return 2.0 * k / (len(a) + len(b))


def exact_match(prediction: str, truths: list[str]) -> int:
    p = normalize(prediction)
    # truths that normalize to nothing cannot be matched
    return int(any(p == t for t in map(normalize, truths) if t))


def inclusion_match(prediction: str, truths: list[str]) -> int:
    """1 iff some normalized truth occurs as a substring of the prediction."""
    normed = [normalize(t) for t in truths]
    normed = [t for t in normed if t]
    if not normed:
        raise EmptyTruth("every ground truth normalizes to the empty string")
    p = normalize(prediction)
    return int(any(t in p for t in normed))


def score_reply(prediction: str, truth: str) -> MatchResult:
    """Full scoring for one synthetic-suite reply against its single truth.

    GPM runs on the extracted answer token, since model replies are usually
    sentences wrapped around a number.
    """
    normed = normalize(prediction)
    extracted = extract_answer_token(normed)
    return MatchResult(
        gpm=gpm(extracted, normalize(truth)),
        exact=exact_match(prediction, [truth]),
        inclusion=inclusion_match(prediction, [truth]),
        normalized_prediction=normed,
        extracted_answer=extracted,
    )
