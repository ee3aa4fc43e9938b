"""Shared fixtures: a tiny corpus and a briefly trained tiny model.

The tiny model is trained once per session; unit tests that need a live
checkpoint reuse it. Scale is deliberately small (2 enc layers, 1 dec
layer, 2 heads, 1000 sentences, a few seconds of training) so the unit
suite stays fast. The acceptance suite builds its own full-scale artifacts.
"""

import numpy as np
import pytest

from headprune.data import SyntheticTaskSpec, gen_corpus
from headprune.model import ModelConfig
from headprune.train import TrainConfig, train

TINY_SPEC = SyntheticTaskSpec(
    langs=("rev", "swap"),
    len_range=(4, 8),
    sizes=(1000, 24, 24),
    seed=3,
    vocab_size=32,
    max_len=12,
)

TINY_CONFIG = ModelConfig(
    vocab_size=32, d_model=32, heads=2, enc_layers=2, dec_layers=1,
    ffn=64, max_len=12, seed=3,
)


@pytest.fixture(scope="session")
def tiny_corpora():
    return gen_corpus(TINY_SPEC)


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_corpora):
    tc = TrainConfig(epochs=8, batch_size=32, lr=3e-3, warmup_steps=20)
    result = train(TINY_CONFIG, tiny_corpora["train"], tc)
    return result.checkpoint


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_attn_matrix(rng, rows, cols):
    """A valid post-softmax matrix: nonnegative rows summing to 1."""
    m = rng.random((rows, cols)) + 1e-3
    return m / m.sum(axis=1, keepdims=True)
