"""Training loop (Adam, warmup, gradient clipping) and a finite-difference
gradient check for the numpy transformer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .checkpoint import Checkpoint
from .core import EMPTY_MASK, AttnType, HeadId, ParallelCorpus
from .data import lang_tag_ids
from .model import (
    Batch,
    ModelConfig,
    build_batch,
    init_params,
    loss_and_grads,
    tokens_to_ids,
)


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"training loss became non-finite at step {step}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 14
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 200
    clip_norm: float = 1.0
    # Probability of zeroing each attention head per training step; 0
    # disables. Survivors are deliberately NOT rescaled: inference-time
    # pruning zeroes heads without compensation, so training must see the
    # same configurations it will be evaluated under.
    head_dropout: float = 0.3


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    epoch_losses: list[float]
    dev_losses: list[float]


def corpus_to_examples(corpora: Mapping[str, ParallelCorpus], config: ModelConfig,
                       langs: Sequence[str]) -> list[tuple[int, list[int], list[int]]]:
    tags = lang_tag_ids(langs)
    examples = []
    for lang in langs:
        corpus = corpora[lang]
        tag = tags[lang]
        for src, tgt in corpus.sentences:
            examples.append(
                (tag, tokens_to_ids(src, config.vocab_size), tokens_to_ids(tgt, config.vocab_size))
            )
    return examples


def _sample_head_dropout(rng, config: ModelConfig, p: float) -> frozenset[HeadId]:
    """Per-step head dropout mask: each prunable head is dropped with
    probability p; at least one survivor per layer is forced. The dropped
    heads are zeroed through the same mask path pruning uses at inference,
    with no rescaling of the survivors."""
    dropped: set[HeadId] = set()
    families = [(AttnType.ENC_SELF, config.enc_layers), (AttnType.CROSS, config.dec_layers)]
    for attn, layers in families:
        for layer in range(layers):
            drop = rng.random(config.heads) < p
            if drop.all():
                drop[int(rng.integers(config.heads))] = False
            dropped.update(HeadId(attn, layer, h) for h in np.nonzero(drop)[0])
    return frozenset(dropped)


def _clip_grads(grads: dict[str, np.ndarray], clip_norm: float) -> None:
    total = 0.0
    for g in grads.values():
        total += float(np.vdot(g, g))
    norm = math.sqrt(total)
    if norm > clip_norm > 0:
        scale = np.float32(clip_norm / norm)
        for g in grads.values():
            g *= scale


def train(config: ModelConfig, corpora: Mapping[str, ParallelCorpus], tc: TrainConfig,
          dev_batch: Batch | None = None,
          progress: Callable[[int, float], None] | None = None) -> TrainResult:
    """Train from scratch on the concatenation of all language pairs.

    Deterministic for a fixed (config.seed, corpora, tc) on one platform.
    Raises TrainingDivergedError naming the step if the loss goes non-finite.
    """
    if not 0.0 <= tc.head_dropout < 1.0:
        raise ValueError(f"head_dropout {tc.head_dropout} outside [0, 1)")
    langs = tuple(corpora.keys())
    params = init_params(config, dtype=np.float32)
    examples = corpus_to_examples(corpora, config, langs)
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng([config.seed, 1])
    step = 0
    epoch_losses: list[float] = []
    dev_losses: list[float] = []
    for _ in range(tc.epochs):
        order = rng.permutation(len(examples))
        losses = []
        for lo in range(0, len(order), tc.batch_size):
            batch = build_batch([examples[i] for i in order[lo : lo + tc.batch_size]], config)
            drop_mask = (_sample_head_dropout(rng, config, tc.head_dropout)
                         if tc.head_dropout > 0.0 else EMPTY_MASK)
            loss, grads = loss_and_grads(params, config, batch, mask=drop_mask)
            step += 1
            if not math.isfinite(loss):
                raise TrainingDivergedError(step)
            _clip_grads(grads, tc.clip_norm)
            lr_t = tc.lr * min(1.0, step / tc.warmup_steps) if tc.warmup_steps else tc.lr
            for name in params:
                kernels.adam_update(params[name], grads[name], adam_m[name], adam_v[name],
                                    lr_t, tc.beta1, tc.beta2, tc.adam_eps, step)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)) if losses else math.nan)
        if dev_batch is not None:
            dev_loss, _ = loss_and_grads(params, config, dev_batch, want_grads=False)
            dev_losses.append(dev_loss)
        if progress is not None:
            progress(len(epoch_losses), epoch_losses[-1])
    return TrainResult(Checkpoint(config, langs, step, params), epoch_losses, dev_losses)


# ---------------------------------------------------------------------------
# finite-difference gradient check
# ---------------------------------------------------------------------------


def grad_check(config: ModelConfig, batch: Batch, epsilon: float = 1e-5,
               n_coords: int = 120, seed: int = 0, mask=EMPTY_MASK) -> float:
    """Max relative error between analytic gradients and central differences
    over a random sample of parameter coordinates, in float64.

    The denominator max(1, |analytic|, |numeric|) falls back to absolute
    error for near-zero gradients (e.g. a perfectly predicted batch). A head
    mask exercises the zeroed-context backward path too.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-4]")
    if n_coords < 100:
        raise ValueError("sample at least 100 coordinates")
    params = init_params(config, dtype=np.float64)
    _, grads = loss_and_grads(params, config, batch, mask=mask)

    names = sorted(params)
    sizes = np.array([params[n].size for n in names])
    bounds = np.cumsum(sizes)
    total = int(bounds[-1])
    rng = np.random.default_rng(seed)
    coords = rng.choice(total, size=min(n_coords, total), replace=False)

    def loss_only():
        loss, _ = loss_and_grads(params, config, batch, mask=mask, want_grads=False)
        return loss

    worst = 0.0
    for flat in sorted(int(c) for c in coords):
        idx = int(np.searchsorted(bounds, flat, side="right"))
        offset = flat - (bounds[idx - 1] if idx else 0)
        name = names[idx]
        orig = params[name].flat[offset]
        params[name].flat[offset] = orig + epsilon
        up = loss_only()
        params[name].flat[offset] = orig - epsilon
        down = loss_only()
        params[name].flat[offset] = orig
        numeric = (up - down) / (2.0 * epsilon)
        analytic = float(grads[name].flat[offset])
        rel = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
        worst = max(worst, rel)
    return worst
