"""Per-head importance metrics (confidence, variance, coverage), their
aggregation over sentence sets, and z-normalization into metric tables."""

from __future__ import annotations

import csv
import enum
import hashlib
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core import AttentionCapture, AttnType

ALL_PAIRS = "ALL"


class MetricKind(enum.Enum):
    CONFIDENCE = "conf"
    VARIANCE = "var"
    COVERAGE = "cov"

    @classmethod
    def parse(cls, text: str) -> "MetricKind":
        for kind in cls:
            if kind.value == text:
                return kind
        raise ValueError(f"unknown metric kind {text!r} (want conf|var|cov)")


def _check_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"attention matrix must be non-empty 2-d, got shape {m.shape}")
    return m


def confidence(m) -> float:
    """Mean over query rows of the row's maximum weight; in [1/|J|, 1]."""
    m = _check_matrix(m)
    return float(m.max(axis=1).mean())


def variance(m) -> float:
    """Negated positional spread around each row's expected key position.

    mu_i = sum_j j * a_ij with 0-based j; returns -sum_ij a_ij (mu_i - j)^2,
    which is <= 0 and equals 0 exactly when every row is one-hot.
    """
    m = _check_matrix(m)
    j = np.arange(m.shape[1], dtype=np.float64)
    mu = m @ j
    return float(-np.sum(m * (mu[:, None] - j[None, :]) ** 2))


def coverage(m) -> float:
    """Sum over key columns of the squared total attention received;
    in [|I|^2/|J|, |I|^2], and exactly |I| for doubly stochastic matrices."""
    m = _check_matrix(m)
    return float(np.sum(m.sum(axis=0) ** 2))


_METRIC_FN = {
    MetricKind.CONFIDENCE: confidence,
    MetricKind.VARIANCE: variance,
    MetricKind.COVERAGE: coverage,
}


def metric_fn(kind: MetricKind):
    return _METRIC_FN[kind]


# ---------------------------------------------------------------------------
# aggregation and normalization
# ---------------------------------------------------------------------------


def aggregate(captures: Iterable[AttentionCapture], kind: MetricKind,
              attn: AttnType) -> dict[tuple[int, int], float]:
    """Unweighted per-head mean of the metric over sentences.

    Masked (all-zero) matrices are skipped; a head masked in every capture
    has no usable data and raises. Summation runs in sorted (sid, pair)
    order so the result does not depend on capture iteration order.
    """
    fn = metric_fn(kind)
    caps = sorted((c for c in captures if c.attn is attn),
                  key=lambda c: (c.sid, c.pair))
    if not caps:
        raise ValueError(f"no captures of attention type {attn.value!r}")
    slots = sorted(caps[0].weights)
    sums = {s: 0.0 for s in slots}
    counts = {s: 0 for s in slots}
    for cap in caps:
        if sorted(cap.weights) != slots:
            raise ValueError(f"capture sid={cap.sid} pair={cap.pair} disagrees "
                             f"on head slots")
        for slot in slots:
            if cap.is_masked(*slot):
                continue
            sums[slot] += fn(cap.weights[slot])
            counts[slot] += 1
    for layer, head in slots:
        if counts[(layer, head)] == 0:
            raise ValueError(f"head {attn.value} {layer} {head} has zero "
                             f"unmasked matrices")
    return {s: sums[s] / counts[s] for s in slots}


def normalize(raw: Mapping[tuple[int, int], float]) -> dict[tuple[int, int], float]:
    """Population z-scores; all-equal input maps to exact zeros."""
    if len(raw) < 2:
        raise ValueError("normalization needs at least 2 heads")
    slots = sorted(raw)
    values = np.array([raw[s] for s in slots], dtype=np.float64)
    std = values.std()
    # std == 0 also catches spreads tiny enough to underflow the variance
    if std == 0.0:
        return {s: 0.0 for s in slots}
    z = (values - values.mean()) / std
    return {s: float(v) for s, v in zip(slots, z)}


@dataclass(frozen=True)
class MetricRow:
    layer: int
    head: int
    raw: float
    normalized: float


@dataclass(frozen=True)
class MetricTable:
    """Raw and normalized scores for every head of one attention type,
    computed from one language pair's captures (or "ALL" for the union)."""

    metric: MetricKind
    attn: AttnType
    pair: str
    rows: tuple[MetricRow, ...]
    n_sentences: int = 0

    def score(self, layer: int, head: int) -> float:
        for row in self.rows:
            if (row.layer, row.head) == (layer, head):
                return row.normalized
        raise KeyError((layer, head))


def build_table(captures: Iterable[AttentionCapture], kind: MetricKind,
                attn: AttnType, pair: str) -> MetricTable:
    caps = [c for c in captures if c.attn is attn
            and (pair == ALL_PAIRS or c.pair == pair)]
    raw = aggregate(caps, kind, attn)
    norm = normalize(raw)
    rows = tuple(MetricRow(layer, head, raw[(layer, head)], norm[(layer, head)])
                 for layer, head in sorted(raw))
    return MetricTable(kind, attn, pair, rows, len(caps))


def table_fingerprint(table: MetricTable) -> str:
    digest = hashlib.sha256()
    digest.update(f"{table.metric.value},{table.attn.value},{table.pair}".encode())
    for r in table.rows:
        digest.update(f"\n{r.layer},{r.head},{r.raw!r},{r.normalized!r}".encode())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# CSV round trip (one table per file)
# ---------------------------------------------------------------------------

CSV_HEADER = ["metric", "attn", "pair", "layer", "head", "raw", "normalized"]


def table_to_csv(table: MetricTable) -> str:
    lines = [",".join(CSV_HEADER)]
    for r in table.rows:
        lines.append(f"{table.metric.value},{table.attn.value},{table.pair},"
                     f"{r.layer},{r.head},{r.raw!r},{r.normalized!r}")
    return "\n".join(lines) + "\n"


def write_table_csv(path, table: MetricTable) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table_to_csv(table))


def read_table_csv(path) -> MetricTable:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        meta = None
        for rec in reader:
            key = (MetricKind.parse(rec["metric"]), AttnType.parse(rec["attn"]),
                   rec["pair"])
            if meta is None:
                meta = key
            elif key != meta:
                raise ValueError(f"{path}: mixed tables in one file")
            rows.append(MetricRow(int(rec["layer"]), int(rec["head"]),
                                  float(rec["raw"]), float(rec["normalized"])))
    if meta is None:
        raise ValueError(f"{path}: no metric rows")
    rows.sort(key=lambda r: (r.layer, r.head))
    return MetricTable(meta[0], meta[1], meta[2], tuple(rows))
