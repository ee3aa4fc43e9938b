"""Head orderings (metric-based, random, sequential backward selection) and
BLEU degradation curves under progressive pruning."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .bleu import BleuScore, bleu_drop
from .core import AttnType, HeadId
from .metrics import MetricTable, table_fingerprint


@dataclass(frozen=True)
class HeadRanking:
    """Total order over the heads of one attention type, least important
    first. method is one of conf|var|cov|sbs|rand-<seed>."""

    method: str
    attn: AttnType
    pair: str
    order: tuple[HeadId, ...]
    provenance: str = ""

    def __post_init__(self):
        if not self.order:
            raise ValueError("empty ranking")
        if len(set(self.order)) != len(self.order):
            raise ValueError("ranking repeats a head")
        for h in self.order:
            if h.attn is not self.attn:
                raise ValueError(f"head {h} does not match ranking type "
                                 f"{self.attn.value}")

    def position(self, head: HeadId) -> int:
        """1-based rank (1 = least important)."""
        return self.order.index(head) + 1


def _check_universe(order: Sequence[HeadId], universe: Sequence[HeadId]) -> None:
    if set(order) != set(universe):
        raise ValueError("ranking does not cover the head universe exactly")


def rank_by_metric(table: MetricTable, universe: Sequence[HeadId]) -> HeadRanking:
    """Ascending by normalized score; ties fall back to lexicographic ids."""
    attn = table.attn
    ids = {(h.layer, h.head): h for h in universe}
    slots = {(r.layer, r.head) for r in table.rows}
    if slots != set(ids):
        raise ValueError(f"table covers {len(slots)} heads, universe has {len(ids)}")
    order = tuple(ids[(r.layer, r.head)]
                  for r in sorted(table.rows,
                                  key=lambda r: (r.normalized, r.layer, r.head)))
    return HeadRanking(table.metric.value, attn, table.pair, order,
                       provenance=table_fingerprint(table))


def rank_random(universe: Sequence[HeadId], seed: int,
                pair: str = "ALL") -> HeadRanking:
    if not universe:
        raise ValueError("empty head universe")
    attn = universe[0].attn
    perm = np.random.default_rng(seed).permutation(len(universe))
    order = tuple(universe[int(i)] for i in perm)
    return HeadRanking(f"rand-{seed}", attn, pair, order, provenance=str(seed))


# ---------------------------------------------------------------------------
# sequential backward selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SbsCandidate:
    head: HeadId
    bleu: float
    drop: float


@dataclass(frozen=True)
class SbsStep:
    step: int  # 1-based
    chosen: HeadId
    bleu: float
    drop: float
    candidates: tuple[SbsCandidate, ...]


def sbs(evaluate: Callable[[frozenset[HeadId]], BleuScore],
        universe: Sequence[HeadId], baseline: BleuScore, pair: str,
        on_step: Callable[[SbsStep], None] | None = None,
        ) -> tuple[HeadRanking, list[SbsStep]]:
    """Greedy backward selection: repeatedly mask the candidate whose
    addition costs the least BLEU relative to the unpruned baseline.

    evaluate receives the trial mask and returns the corpus BLEU under it;
    it is called exactly N(N+1)/2 times for N = len(universe). Ties on the
    drop break toward the lexicographically smallest head (candidates are
    visited in that order and only a strictly smaller drop displaces the
    leader). on_step, when given, sees each step as soon as it is decided,
    so a partial log survives an evaluation failure.
    """
    if not universe:
        raise ValueError("empty head universe")
    attn = universe[0].attn
    remaining = sorted(universe)
    selections: list[HeadId] = []
    steps: list[SbsStep] = []
    while remaining:
        best: SbsCandidate | None = None
        candidates = []
        for head in remaining:
            score = evaluate(frozenset(selections) | {head})
            cand = SbsCandidate(head, score.score, bleu_drop(baseline, score))
            candidates.append(cand)
            if best is None or cand.drop < best.drop:
                best = cand
        selections.append(best.head)
        remaining.remove(best.head)
        step = SbsStep(len(selections), best.head, best.bleu, best.drop,
                       tuple(candidates))
        steps.append(step)
        if on_step is not None:
            on_step(step)
    ranking = HeadRanking("sbs", attn, pair, tuple(selections))
    return ranking, steps


def write_sbs_log(path, steps: Iterable[SbsStep]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in steps:
            fh.write(sbs_step_json(s) + "\n")


def sbs_step_json(s: SbsStep) -> str:
    rec = {
        "step": s.step,
        "chosen": str(s.chosen),
        "bleu": s.bleu,
        "drop": s.drop,
        "candidates": [{"head": str(c.head), "bleu": c.bleu, "drop": c.drop}
                       for c in s.candidates],
    }
    return json.dumps(rec, sort_keys=True)


def _head_from_str(text: str) -> HeadId:
    parts = text.split()
    if len(parts) != 3:
        raise ValueError(f"bad head spec {text!r}")
    return HeadId(AttnType.parse(parts[0]), int(parts[1]), int(parts[2]))


def read_sbs_log(path) -> list[SbsStep]:
    steps = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            cands = tuple(SbsCandidate(_head_from_str(c["head"]), c["bleu"], c["drop"])
                          for c in rec["candidates"])
            steps.append(SbsStep(rec["step"], _head_from_str(rec["chosen"]),
                                 rec["bleu"], rec["drop"], cands))
    return steps


# ---------------------------------------------------------------------------
# pruning curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PruneCurve:
    """BLEU at k pruned heads for k = 0, step, ..., N (N always included)."""

    method: str
    attn: AttnType
    pair: str
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        ks = [k for k, _ in self.points]
        if not ks or ks[0] != 0 or any(a >= b for a, b in zip(ks, ks[1:])):
            raise ValueError("curve k values must strictly increase from 0")

    @property
    def ks(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self.points)

    @property
    def bleus(self) -> tuple[float, ...]:
        return tuple(b for _, b in self.points)

    def at(self, k: int) -> float:
        for kk, b in self.points:
            if kk == k:
                return b
        raise KeyError(k)


def prune_curve(evaluate: Callable[[frozenset[HeadId]], BleuScore],
                ranking: HeadRanking, step: int = 1) -> PruneCurve:
    """Mask the first k heads of the ranking for k = 0, step, 2*step, ..., N.

    The k=0 point is the unmasked baseline (evaluate with an empty mask).
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    n = len(ranking.order)
    ks = list(range(0, n + 1, step))
    if ks[-1] != n:
        ks.append(n)
    points = []
    for k in ks:
        score = evaluate(frozenset(ranking.order[:k]))
        points.append((k, score.score))
    return PruneCurve(ranking.method, ranking.attn, ranking.pair, tuple(points))


def average_curves(curves: Sequence[PruneCurve], method: str | None = None) -> PruneCurve:
    """Pointwise mean of curves sharing one k grid (the random baseline is
    reported as the average of several seeded runs)."""
    if not curves:
        raise ValueError("no curves to average")
    first = curves[0]
    for c in curves[1:]:
        if c.ks != first.ks:
            raise ValueError("curves sampled on different k grids")
        if c.attn is not first.attn or c.pair != first.pair:
            raise ValueError("curves describe different settings")
    points = tuple(
        (k, float(np.mean([c.points[i][1] for c in curves])))
        for i, k in enumerate(first.ks))
    return PruneCurve(method or "rand", first.attn, first.pair, points)


# ---------------------------------------------------------------------------
# rank dispersion across language pairs
# ---------------------------------------------------------------------------


def rank_std_across_pairs(rankings: Mapping[str, HeadRanking]) -> dict[HeadId, float]:
    """Population std of each head's 1-based rank across language pairs."""
    if len(rankings) < 2:
        raise ValueError("need rankings from at least 2 language pairs")
    pairs = sorted(rankings)
    universe = set(rankings[pairs[0]].order)
    for p in pairs[1:]:
        if set(rankings[p].order) != universe:
            raise ValueError("rankings cover different head universes")
    out = {}
    for head in sorted(universe):
        positions = [rankings[p].position(head) for p in pairs]
        out[head] = float(np.std(positions))
    return out


# ---------------------------------------------------------------------------
# CSV round trips
# ---------------------------------------------------------------------------

RANKING_HEADER = ["method", "attn", "pair", "rank", "layer", "head"]
CURVE_HEADER = ["method", "attn", "pair", "k", "bleu"]


def ranking_to_csv(ranking: HeadRanking) -> str:
    lines = [",".join(RANKING_HEADER)]
    for i, h in enumerate(ranking.order, start=1):
        lines.append(f"{ranking.method},{ranking.attn.value},{ranking.pair},"
                     f"{i},{h.layer},{h.head}")
    return "\n".join(lines) + "\n"


def write_ranking_csv(path, ranking: HeadRanking) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(ranking_to_csv(ranking))


def read_ranking_csv(path) -> HeadRanking:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RANKING_HEADER:
            raise ValueError(f"{path}: expected header {','.join(RANKING_HEADER)}")
        meta = None
        entries = []
        for rec in reader:
            key = (rec["method"], AttnType.parse(rec["attn"]), rec["pair"])
            if meta is None:
                meta = key
            elif key != meta:
                raise ValueError(f"{path}: mixed rankings in one file")
            entries.append((int(rec["rank"]),
                            HeadId(key[1], int(rec["layer"]), int(rec["head"]))))
    if meta is None:
        raise ValueError(f"{path}: no ranking rows")
    entries.sort(key=lambda e: e[0])
    if [r for r, _ in entries] != list(range(1, len(entries) + 1)):
        raise ValueError(f"{path}: rank column must be 1..N without gaps")
    return HeadRanking(meta[0], meta[1], meta[2], tuple(h for _, h in entries))


def curves_to_csv(curves: Sequence[PruneCurve]) -> str:
    lines = [",".join(CURVE_HEADER)]
    for c in curves:
        for k, b in c.points:
            lines.append(f"{c.method},{c.attn.value},{c.pair},{k},{b!r}")
    return "\n".join(lines) + "\n"


def write_curves_csv(path, curves: Sequence[PruneCurve]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(curves_to_csv(curves))


def read_curves_csv(path) -> list[PruneCurve]:
    groups: dict[tuple[str, AttnType, str], list[tuple[int, float]]] = {}
    order = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CURVE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CURVE_HEADER)}")
        for rec in reader:
            key = (rec["method"], AttnType.parse(rec["attn"]), rec["pair"])
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append((int(rec["k"]), float(rec["bleu"])))
    if not order:
        raise ValueError(f"{path}: no curve rows")
    return [PruneCurve(m, a, p, tuple(sorted(groups[(m, a, p)])))
            for m, a, p in order]
