"""Synthetic many-to-one corpora: several "languages", one shared target.

Each language is a deterministic bijective transform of the target token
sequence, so the reference is exactly recoverable and the reference side is
identical across languages for equal sentence ids. Token ids are rendered as
decimal strings at the text layer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import ParallelCorpus, make_corpus

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
N_SPECIALS = 3  # language-tag ids start right after

SPLITS = ("train", "dev", "test")

Transform = Callable[[Sequence[int]], list[int]]


def lang_tag_ids(langs: Sequence[str]) -> dict[str, int]:
    """Token id of each language tag; tags sit between the specials and the
    content tokens so the source side can be prefixed with its language."""
    return {lang: N_SPECIALS + i for i, lang in enumerate(langs)}


def content_range(vocab_size: int, n_langs: int) -> tuple[int, int]:
    """Half-open [lo, hi) id range available for content tokens."""
    lo = N_SPECIALS + n_langs
    if vocab_size - lo < 2:
        raise ValueError(f"vocab size {vocab_size} leaves no room for content tokens")
    return lo, vocab_size


def make_transform(name: str, lo: int, hi: int) -> Transform:
    """Look up a bijective sequence transform by id.

    Supported: identity, rev (reversal), swap (adjacent pairwise swap, odd
    tail fixed), offset<k> (per-token modular shift inside [lo, hi)).
    """
    if name == "identity":
        return lambda toks: list(toks)
    if name in ("rev", "reverse"):
        return lambda toks: list(reversed(toks))
    if name == "swap":

        def swap(toks):
            out = list(toks)
            for i in range(0, len(out) - 1, 2):
                out[i], out[i + 1] = out[i + 1], out[i]
            return out

        return swap
    m = re.fullmatch(r"offset(-?\d+)", name)
    if m:
        k = int(m.group(1))
        n = hi - lo
        return lambda toks: [(t - lo + k) % n + lo for t in toks]
    raise ValueError(f"unknown transform {name!r} (expected identity|rev|swap|offset<k>)")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Parameters of the synthetic many-to-one task.

    Languages are named after their transform id. Dev and test targets are
    generated once and shared across all languages, mirroring the controlled
    multi-pair comparison setup.
    """

    langs: tuple[str, ...] = ("rev", "offset3", "swap")
    len_range: tuple[int, int] = (5, 15)
    sizes: tuple[int, int, int] = (5000, 300, 300)  # train, dev, test
    seed: int = 0
    vocab_size: int = 64
    max_len: int = 24

    def __post_init__(self):
        if not self.langs or len(set(self.langs)) != len(self.langs):
            raise ValueError("languages must be non-empty and unique")
        lo, hi = self.len_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad sentence length range {self.len_range}")
        if hi + 2 > self.max_len:
            raise ValueError(
                f"length range {self.len_range} exceeds max sequence length "
                f"{self.max_len} (needs room for tag/BOS and EOS)"
            )
        if any(s < 1 for s in self.sizes):
            raise ValueError("train/dev/test sizes must be >= 1")
        content_range(self.vocab_size, len(self.langs))
        for lang in self.langs:
            make_transform(lang, *content_range(self.vocab_size, len(self.langs)))


def gen_corpus(spec: SyntheticTaskSpec) -> dict[str, dict[str, ParallelCorpus]]:
    """Generate {split: {lang: ParallelCorpus}} deterministically from the seed.

    Within every split the target side is identical across languages for the
    same sentence id and each language's source is transform(target).
    """
    lo, hi = content_range(spec.vocab_size, len(spec.langs))
    transforms = {lang: make_transform(lang, lo, hi) for lang in spec.langs}
    rng = np.random.default_rng(spec.seed)
    out: dict[str, dict[str, ParallelCorpus]] = {}
    for split, size in zip(SPLITS, spec.sizes):
        targets = []
        for _ in range(size):
            n = int(rng.integers(spec.len_range[0], spec.len_range[1] + 1))
            targets.append([int(t) for t in rng.integers(lo, hi, size=n)])
        out[split] = {}
        for lang in spec.langs:
            tf = transforms[lang]
            pairs = [
                (tuple(str(t) for t in tf(tgt)), tuple(str(t) for t in tgt))
                for tgt in targets
            ]
            out[split][lang] = make_corpus(lang, pairs)
    return out


# ---------------------------------------------------------------------------
# corpus files: <split>.<lang>.src next to a shared <split>.tgt
# ---------------------------------------------------------------------------


def corpora_to_files(corpora: dict[str, dict[str, ParallelCorpus]]) -> dict[str, str]:
    """Map corpus file names to their text contents."""
    files: dict[str, str] = {}
    for split, by_lang in corpora.items():
        refs = None
        for lang, corpus in by_lang.items():
            if refs is None:
                refs = corpus.references
            elif refs != corpus.references:
                raise ValueError(f"split {split!r}: reference sides differ across languages")
            files[f"{split}.{lang}.src"] = "".join(" ".join(s) + "\n" for s in corpus.sources)
        files[f"{split}.tgt"] = "".join(" ".join(r) + "\n" for r in refs)
    return files


def write_corpora(directory: Path, corpora: dict[str, dict[str, ParallelCorpus]]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in corpora_to_files(corpora).items():
        path = directory / name
        path.write_text(text)
        written.append(path)
    return written


def read_sentences(path: Path) -> list[tuple[str, ...]]:
    return [tuple(line.split()) for line in Path(path).read_text().splitlines()]


def read_corpus(directory: Path, split: str, lang: str) -> ParallelCorpus:
    directory = Path(directory)
    sources = read_sentences(directory / f"{split}.{lang}.src")
    targets = read_sentences(directory / f"{split}.tgt")
    if len(sources) != len(targets):
        raise ValueError(f"{split}.{lang}.src and {split}.tgt differ in length")
    return make_corpus(lang, list(zip(sources, targets)))


def corpus_langs(directory: Path, split: str = "train") -> list[str]:
    """Language tags present in a corpus directory, in sorted order."""
    pattern = re.compile(rf"^{re.escape(split)}\.(.+)\.src$")
    langs = []
    for p in sorted(Path(directory).iterdir()):
        m = pattern.match(p.name)
        if m:
            langs.append(m.group(1))
    if not langs:
        raise FileNotFoundError(f"no {split}.*.src files under {directory}")
    return langs
