"""Shared vocabulary: head identifiers, attention captures, masks, corpora."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-5


class AttnType(enum.Enum):
    """The two attention families analyzed: encoder self-attention and
    encoder-decoder (cross) attention. Decoder self-attention is out of scope."""

    ENC_SELF = "enc"
    CROSS = "cross"

    @property
    def rank(self) -> int:
        return 0 if self is AttnType.ENC_SELF else 1

    @classmethod
    def parse(cls, text: str) -> "AttnType":
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown attention type {text!r} (expected enc|cross)")


@dataclass(frozen=True)
class HeadId:
    """One attention head, addressed by (attention type, layer, head), 0-based.

    Ordering is lexicographic on (attn, layer, head) with enc before cross;
    used everywhere for deterministic tie-breaking.
    """

    attn: AttnType
    layer: int
    head: int

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.attn.rank, self.layer, self.head)

    def __lt__(self, other: "HeadId") -> bool:
        return self.key < other.key

    def __str__(self) -> str:
        return f"{self.attn.value} {self.layer} {self.head}"


def head_universe(config) -> list[HeadId]:
    """All maskable heads of a model: every encoder self-attention head first,
    then every cross-attention head, each block in (layer, head) order.

    ``config`` needs enc_layers, dec_layers and heads attributes.
    """
    if config.enc_layers < 1 or config.dec_layers < 1 or config.heads < 1:
        raise ValueError("layer and head counts must be >= 1")
    out = [
        HeadId(AttnType.ENC_SELF, l, h)
        for l in range(config.enc_layers)
        for h in range(config.heads)
    ]
    out += [
        HeadId(AttnType.CROSS, l, h)
        for l in range(config.dec_layers)
        for h in range(config.heads)
    ]
    return out


def universe_for(config, attn: AttnType) -> list[HeadId]:
    return [h for h in head_universe(config) if h.attn is attn]


# ---------------------------------------------------------------------------
# head masks
# ---------------------------------------------------------------------------

HeadMask = frozenset  # of HeadId

EMPTY_MASK: frozenset[HeadId] = frozenset()


def parse_mask(text: str) -> frozenset[HeadId]:
    """Parse the head-mask text format: one `enc|cross <layer> <head>` per
    line, 0-based indices, `#` starts a comment."""
    heads = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"mask line {lineno}: expected 'enc|cross <layer> <head>', got {raw!r}")
        try:
            attn = AttnType.parse(parts[0])
            layer, head = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ValueError(f"mask line {lineno}: {exc}") from None
        if layer < 0 or head < 0:
            raise ValueError(f"mask line {lineno}: negative index in {raw!r}")
        heads.add(HeadId(attn, layer, head))
    return frozenset(heads)


def format_mask(mask: Iterable[HeadId]) -> str:
    return "".join(f"{h}\n" for h in sorted(mask))


def check_mask(mask: Iterable[HeadId], config) -> None:
    """Raise if any head falls outside the model's layer/head counts."""
    for h in mask:
        layers = config.enc_layers if h.attn is AttnType.ENC_SELF else config.dec_layers
        if not (0 <= h.layer < layers and 0 <= h.head < config.heads):
            raise ValueError(f"mask head {h} out of range for model config")


# ---------------------------------------------------------------------------
# attention captures
# ---------------------------------------------------------------------------


@dataclass
class AttentionCapture:
    """Post-softmax attention weights of every head of one attention type for
    one sentence. Masked heads carry an all-zero matrix and are flagged.

    For ENC_SELF the matrices are (S, S); for CROSS they are (T, S). Arrays
    are float64 and treated as immutable once constructed.
    """

    sid: int
    pair: str
    attn: AttnType
    weights: dict[tuple[int, int], np.ndarray]
    masked: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def matrix(self, layer: int, head: int) -> np.ndarray:
        return self.weights[(layer, head)]

    def is_masked(self, layer: int, head: int) -> bool:
        return (layer, head) in self.masked


@dataclass(frozen=True)
class CaptureViolation:
    sid: int
    attn: AttnType
    layer: int
    head: int
    kind: str  # missing-slot | extra-slot | shape | row-sum | range | masked-nonzero
    detail: str


def validate_capture(cap: AttentionCapture, config) -> list[CaptureViolation]:
    """Check one capture against the model configuration.

    Returns every violation found (never stops at the first): missing or
    extra (layer, head) slots, shape mismatches, rows not summing to 1
    within ROW_SUM_TOL, entries outside [0, 1], and nonzero masked slots.
    An empty list means the capture is valid.
    """
    layers = config.enc_layers if cap.attn is AttnType.ENC_SELF else config.dec_layers
    expected = {(l, h) for l in range(layers) for h in range(config.heads)}
    violations: list[CaptureViolation] = []

    def bad(layer, head, kind, detail):
        violations.append(CaptureViolation(cap.sid, cap.attn, layer, head, kind, detail))

    for l, h in sorted(expected - set(cap.weights)):
        bad(l, h, "missing-slot", "slot absent from capture")
    for l, h in sorted(set(cap.weights) - expected):
        bad(l, h, "extra-slot", "slot outside model configuration")

    shape = None
    for (l, h) in sorted(set(cap.weights) & expected):
        w = np.asarray(cap.weights[(l, h)])
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            bad(l, h, "shape", f"expected 2-d matrix, got shape {w.shape}")
            continue
        if cap.attn is AttnType.ENC_SELF and w.shape[0] != w.shape[1]:
            bad(l, h, "shape", f"self-attention matrix must be square, got {w.shape}")
            continue
        if shape is None:
            shape = w.shape
        elif w.shape != shape:
            bad(l, h, "shape", f"shape {w.shape} differs from {shape} in same capture")
            continue
        if cap.is_masked(l, h):
            if np.any(w != 0.0):
                bad(l, h, "masked-nonzero", "masked head must record an all-zero matrix")
            continue
        if np.any(w < 0.0) or np.any(w > 1.0):
            bad(l, h, "range", "entries outside [0, 1]")
        rows = np.abs(w.sum(axis=1) - 1.0)
        worst = int(np.argmax(rows))
        if rows[worst] > ROW_SUM_TOL:
            bad(l, h, "row-sum", f"row {worst} sums to {w[worst].sum():.6f}")
    return violations


# ---------------------------------------------------------------------------
# parallel corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParallelCorpus:
    """Sentence-aligned (source, reference) pairs for one language pair.

    Tokens are whitespace-level strings; sentence id is the list index. In
    the many-to-one setup the reference side is shared across languages for
    equal sentence ids.
    """

    pair: str
    sentences: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    def __post_init__(self):
        if not self.sentences:
            raise ValueError(f"corpus {self.pair!r} is empty")
        for sid, (src, ref) in enumerate(self.sentences):
            if not src or not ref:
                raise ValueError(f"corpus {self.pair!r} sid {sid}: empty sentence")

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def sources(self) -> list[tuple[str, ...]]:
        return [s for s, _ in self.sentences]

    @property
    def references(self) -> list[tuple[str, ...]]:
        return [r for _, r in self.sentences]


def make_corpus(pair: str, pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> ParallelCorpus:
    return ParallelCorpus(pair, tuple((tuple(s), tuple(r)) for s, r in pairs))
