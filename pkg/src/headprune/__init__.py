"""Attention-head importance analysis for a toy many-to-one translation
model: per-head metrics, head rankings (metric, random, sequential backward
selection), pruning curves, and language-specificity statistics."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    AttentionCapture,
    AttnType,
    EMPTY_MASK,
    HeadId,
    HeadMask,
    ParallelCorpus,
    format_mask,
    head_universe,
    parse_mask,
    universe_for,
    validate_capture,
)
from .model import DEFAULT_CONFIG, ModelConfig  # noqa: F401
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint  # noqa: F401
from .data import SyntheticTaskSpec, gen_corpus  # noqa: F401
from .train import TrainConfig, grad_check, train  # noqa: F401
from .decode import TranslationResult, translate  # noqa: F401
from .bleu import BleuScore, bleu_drop, corpus_bleu  # noqa: F401
from .metrics import (  # noqa: F401
    MetricKind,
    MetricTable,
    build_table,
    confidence,
    coverage,
    variance,
)
from .ranking import (  # noqa: F401
    HeadRanking,
    PruneCurve,
    average_curves,
    prune_curve,
    rank_by_metric,
    rank_random,
    rank_std_across_pairs,
    sbs,
)
from .stats import MwuResult, PolyFit, compare_curves, mann_whitney_u, polyfit  # noqa: F401
