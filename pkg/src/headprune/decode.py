"""Greedy translation with an incremental decoder cache, optional capture of
post-softmax attention weights, and JSONL capture serialization.

Captures hold the weights every head computed before masking zeroed its
context, except that masked heads are stored as all-zero matrices and
flagged, so downstream metrics can skip them without guessing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .checkpoint import Checkpoint
from .core import AttentionCapture, AttnType, EMPTY_MASK, HeadId, check_mask
from .data import BOS_ID, EOS_ID, PAD_ID, lang_tag_ids
from .model import (
    _merge_heads,
    _split_heads,
    encoder_forward,
    key_pad_bias,
    mask_by_layer,
    sinusoidal_positions,
    tokens_to_ids,
)


@dataclass(frozen=True)
class TranslationError:
    sid: int
    message: str


@dataclass
class TranslationResult:
    """Hypotheses aligned with the input sources.

    A source that cannot be translated (bad token, too long) keeps a None
    hypothesis and contributes an error record instead of aborting the run.
    captures is None unless requested; otherwise it aligns with the sources
    and maps each attention type to that sentence's capture.
    """

    pair: str
    hypotheses: list[tuple[str, ...] | None]
    errors: list[TranslationError]
    captures: list[dict[AttnType, AttentionCapture] | None] | None

    @property
    def n_failed(self) -> int:
        return len(self.errors)


def translate(ckpt: Checkpoint, pair: str, sources: Sequence[Sequence[str]],
              mask=EMPTY_MASK, capture: bool = False,
              batch_size: int = 64) -> TranslationResult:
    """Translate sources greedily under a head mask, without retraining."""
    config = ckpt.config
    if pair not in ckpt.langs:
        raise ValueError(f"pair {pair!r} unknown to checkpoint (has {ckpt.langs})")
    check_mask(mask, config)
    tag = lang_tag_ids(ckpt.langs)[pair]
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")

    hyps: list[tuple[str, ...] | None] = [None] * len(sources)
    caps: list[dict[AttnType, AttentionCapture] | None] | None
    caps = [None] * len(sources) if capture else None
    errors: list[TranslationError] = []
    todo: list[tuple[int, list[int]]] = []
    for sid, tokens in enumerate(sources):
        try:
            ids = tokens_to_ids(tokens, config.vocab_size)
        except ValueError as exc:
            errors.append(TranslationError(sid, str(exc)))
            continue
        if len(ids) + 2 > config.max_len:
            errors.append(TranslationError(
                sid, f"source length {len(ids)} exceeds model capacity {config.max_len - 2}"))
            continue
        todo.append((sid, ids))
    for lo in range(0, len(todo), batch_size):
        _decode_chunk(ckpt.params, config, pair, tag, todo[lo : lo + batch_size],
                      mask, hyps, caps)
    return TranslationResult(pair, hyps, errors, caps)


def _decode_chunk(params, config, pair, tag, chunk, mask, hyps, caps):
    """Greedy decode one padded batch, filling hyps/caps at global sids."""
    dtype = params["src_emb"].dtype
    b = len(chunk)
    n_heads, head_dim = config.heads, config.head_dim
    scale = 1.0 / math.sqrt(head_dim)
    src_lens = [len(ids) + 2 for _, ids in chunk]
    src = np.full((b, max(src_lens)), PAD_ID, dtype=np.int64)
    for row, (_, ids) in enumerate(chunk):
        src[row, 0] = tag
        src[row, 1 : 1 + len(ids)] = ids
        src[row, 1 + len(ids)] = EOS_ID

    want_capture = caps is not None
    enc_out, enc_probs = encoder_forward(params, config, src, mask, {},
                                         capture=want_capture)
    src_bias = key_pad_bias(src, enc_out.dtype)
    positions = sinusoidal_positions(config.max_len, config.d_model, dtype)

    # per layer: cross keys/values once, self keys/values grown step by step
    cross_k, cross_v, cross_zero = [], [], []
    for i in range(config.dec_layers):
        cross_k.append(_split_heads(enc_out @ params[f"dec{i}.cross.wk"], n_heads))
        cross_v.append(_split_heads(enc_out @ params[f"dec{i}.cross.wv"], n_heads))
        cross_zero.append(mask_by_layer(mask, AttnType.CROSS, i))
    self_k = [np.zeros((b, n_heads, config.max_len, head_dim), dtype=dtype)
              for _ in range(config.dec_layers)]
    self_v = [np.zeros((b, n_heads, config.max_len, head_dim), dtype=dtype)
              for _ in range(config.dec_layers)]
    cross_rows: list[list[np.ndarray]] = [[] for _ in range(config.dec_layers)]

    generated = np.full((b, config.max_len), EOS_ID, dtype=np.int64)
    n_steps = np.zeros(b, dtype=np.int64)
    alive = np.ones(b, dtype=bool)
    cur = np.full((b, 1), BOS_ID, dtype=np.int64)
    for step in range(config.max_len):
        y = params["tgt_emb"][cur] * math.sqrt(config.d_model) + positions[step]
        for i in range(config.dec_layers):
            a, _, _ = kernels.layer_norm(y, params[f"dec{i}.ln1.g"],
                                         params[f"dec{i}.ln1.b"])
            q = _split_heads(a @ params[f"dec{i}.self.wq"], n_heads)
            self_k[i][:, :, step] = _split_heads(a @ params[f"dec{i}.self.wk"],
                                                 n_heads)[:, :, 0]
            self_v[i][:, :, step] = _split_heads(a @ params[f"dec{i}.self.wv"],
                                                 n_heads)[:, :, 0]
            ks = self_k[i][:, :, : step + 1]
            vs = self_v[i][:, :, : step + 1]
            probs = kernels.softmax_lastaxis(
                np.matmul(q, ks.transpose(0, 1, 3, 2)) * scale)
            y = y + _merge_heads(np.matmul(probs, vs)) @ params[f"dec{i}.self.wo"]

            c, _, _ = kernels.layer_norm(y, params[f"dec{i}.ln2.g"],
                                         params[f"dec{i}.ln2.b"])
            q = _split_heads(c @ params[f"dec{i}.cross.wq"], n_heads)
            probs = kernels.softmax_lastaxis(
                np.matmul(q, cross_k[i].transpose(0, 1, 3, 2)) * scale + src_bias)
            if want_capture:
                cross_rows[i].append(probs[:, :, 0].astype(np.float64))
            ctx = np.matmul(probs, cross_v[i])
            if cross_zero[i]:
                ctx[:, cross_zero[i]] = 0.0
            y = y + _merge_heads(ctx) @ params[f"dec{i}.cross.wo"]

            f, _, _ = kernels.layer_norm(y, params[f"dec{i}.ln3.g"],
                                         params[f"dec{i}.ln3.b"])
            act = kernels.gelu(f @ params[f"dec{i}.ffn.w1"] + params[f"dec{i}.ffn.b1"])
            y = y + act @ params[f"dec{i}.ffn.w2"] + params[f"dec{i}.ffn.b2"]
        out, _, _ = kernels.layer_norm(y, params["dec.ln.g"], params["dec.ln.b"])
        logits = out[:, 0] @ params["out.w"] + params["out.b"]
        nxt = logits.argmax(axis=1)
        generated[:, step] = np.where(alive, nxt, EOS_ID)
        n_steps[alive] += 1
        alive &= generated[:, step] != EOS_ID
        if not alive.any():
            break
        cur = generated[:, step : step + 1]

    stacked = [np.stack(rows) for rows in cross_rows] if want_capture else None
    for row, (sid, _) in enumerate(chunk):
        steps = int(n_steps[row])
        toks = generated[row, :steps]
        if steps and toks[-1] == EOS_ID:
            toks = toks[:-1]
        hyps[sid] = tuple(str(int(t)) for t in toks)
        if want_capture:
            caps[sid] = {
                AttnType.ENC_SELF: _enc_capture(sid, pair, config, mask, enc_probs,
                                                row, src_lens[row]),
                AttnType.CROSS: _cross_capture(sid, pair, config, mask, stacked,
                                               row, steps, src_lens[row]),
            }


def _enc_capture(sid, pair, config, mask, enc_probs, row, s_len):
    weights, masked = {}, set()
    for layer in range(config.enc_layers):
        for head in range(config.heads):
            if HeadId(AttnType.ENC_SELF, layer, head) in mask:
                weights[(layer, head)] = np.zeros((s_len, s_len))
                masked.add((layer, head))
            else:
                weights[(layer, head)] = enc_probs[layer][row, head, :s_len, :s_len]\
                    .astype(np.float64)
    return AttentionCapture(sid, pair, AttnType.ENC_SELF, weights, frozenset(masked))


def _cross_capture(sid, pair, config, mask, stacked, row, steps, s_len):
    weights, masked = {}, set()
    for layer in range(config.dec_layers):
        for head in range(config.heads):
            if HeadId(AttnType.CROSS, layer, head) in mask:
                weights[(layer, head)] = np.zeros((steps, s_len))
                masked.add((layer, head))
            else:
                weights[(layer, head)] = np.ascontiguousarray(
                    stacked[layer][:steps, row, head, :s_len])
    return AttentionCapture(sid, pair, AttnType.CROSS, weights, frozenset(masked))


def collect_captures(result: TranslationResult) -> list[AttentionCapture]:
    """Flatten per-sentence captures, sid order, self-attention first."""
    out: list[AttentionCapture] = []
    for entry in result.captures or []:
        if entry is not None:
            out.append(entry[AttnType.ENC_SELF])
            out.append(entry[AttnType.CROSS])
    return out


# ---------------------------------------------------------------------------
# JSONL serialization: one record per (sentence, attention type, layer, head)
# ---------------------------------------------------------------------------


def captures_to_jsonl(captures: Iterable[AttentionCapture]) -> str:
    """Serialize captures one record per line; floats survive the round
    trip exactly (shortest-repr JSON floats)."""
    lines = []
    for cap in captures:
        for layer, head in sorted(cap.weights):
            rec = {
                "sid": cap.sid,
                "pair": cap.pair,
                "attn": cap.attn.value,
                "layer": layer,
                "head": head,
                "w": [[float(x) for x in r] for r in np.asarray(cap.weights[(layer, head)])],
            }
            lines.append(json.dumps(rec, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def write_captures_jsonl(path, captures: Iterable[AttentionCapture]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(captures_to_jsonl(captures))


def read_captures_jsonl(path) -> list[AttentionCapture]:
    """Load captures, grouping records by (sid, pair, attention type) in
    first-appearance order. All-zero matrices are flagged as masked heads
    (a live softmax row always sums to 1, so zeros are unambiguous)."""
    groups: dict[tuple[int, str, AttnType], dict[tuple[int, int], np.ndarray]] = {}
    order: list[tuple[int, str, AttnType]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            where = f"{path} line {line_no}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{where}: invalid JSON ({exc})") from None
            try:
                key = (int(rec["sid"]), str(rec["pair"]), AttnType.parse(rec["attn"]))
                slot = (int(rec["layer"]), int(rec["head"]))
                w = np.array(rec["w"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{where}: bad capture record ({exc})") from None
            if w.ndim != 2:
                raise ValueError(f"{where}: weight matrix must be 2-d, got shape {w.shape}")
            if key not in groups:
                groups[key] = {}
                order.append(key)
            if slot in groups[key]:
                raise ValueError(f"{where}: duplicate record for layer {slot[0]} head {slot[1]}")
            groups[key][slot] = w
    captures = []
    for sid, pair, attn in order:
        weights = groups[(sid, pair, attn)]
        masked = frozenset(s for s, w in weights.items() if w.size and not w.any())
        captures.append(AttentionCapture(sid, pair, attn, weights, masked))
    return captures
