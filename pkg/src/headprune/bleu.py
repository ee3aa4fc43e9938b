"""Corpus-level BLEU: clipped n-gram precisions, brevity penalty, floor
smoothing for zero-match orders, and order exclusion when no n-grams exist."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuScore:
    """score = 100 * bp * exp(mean of ln p over included orders).

    precisions holds the value each order contributed (smoothed where the
    raw match count was zero); None marks an excluded order (no hypothesis
    n-grams of that length anywhere in the corpus). degenerate flags the
    all-empty-hypotheses case where the score is pinned to 0.
    ref_fingerprint identifies the reference set so that scores computed
    against different references cannot be subtracted by accident.
    """

    score: float
    precisions: tuple[float | None, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    degenerate: bool
    ref_fingerprint: str


def reference_fingerprint(references: Sequence[Sequence[str]]) -> str:
    digest = hashlib.sha256()
    for ref in references:
        digest.update(" ".join(ref).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()[:16]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str] | None],
                references: Sequence[Sequence[str]],
                max_order: int = MAX_ORDER) -> BleuScore:
    """Score a corpus of tokenized hypotheses against single references.

    None hypotheses (failed translations) count as empty, which penalizes
    them through the brevity penalty instead of crashing the run. A corpus
    whose hypotheses are all empty scores 0 and is flagged degenerate.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("empty hypothesis set")
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    fingerprint = reference_fingerprint(references)

    hyp_len = 0
    ref_len = 0
    matches = [0] * max_order
    totals = [0] * max_order
    for hyp, ref in zip(hypotheses, references):
        hyp = tuple(hyp) if hyp is not None else ()
        ref = tuple(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            got = _ngrams(hyp, n)
            if not got:
                continue
            want = _ngrams(ref, n)
            totals[n - 1] += sum(got.values())
            matches[n - 1] += sum(min(c, want[g]) for g, c in got.items())

    if hyp_len == 0:
        return BleuScore(0.0, (None,) * max_order, 0.0, 0, ref_len, True, fingerprint)

    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    precisions: list[float | None] = []
    logs = []
    for n in range(max_order):
        if totals[n] == 0:
            precisions.append(None)
            continue
        p = matches[n] / totals[n] if matches[n] else 1.0 / (2.0 * totals[n])
        precisions.append(p)
        logs.append(math.log(p))
    score = 100.0 * bp * math.exp(sum(logs) / len(logs))
    return BleuScore(score, tuple(precisions), bp, hyp_len, ref_len, False, fingerprint)


def bleu_drop(baseline: BleuScore, pruned: BleuScore) -> float:
    """baseline minus pruned; negative when pruning helped."""
    if baseline.ref_fingerprint != pruned.ref_fingerprint:
        raise ValueError("BLEU scores were computed against different reference sets")
    return baseline.score - pruned.score


def format_bleu(b: BleuScore) -> str:
    parts = "/".join("n/a" if p is None else f"{p:.4f}" for p in b.precisions)
    ratio = b.hyp_len / b.ref_len if b.ref_len else math.nan
    return (f"BLEU = {b.score:.3f} ({parts}, BP={b.brevity_penalty:.4f}, "
            f"ratio={ratio:.4f})")
