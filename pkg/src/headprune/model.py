"""A small numpy encoder-decoder transformer with per-head masking.

Pre-norm residual blocks, fixed sinusoidal positions, GELU feed-forward,
manual backprop. Heads listed in a mask contribute a zero context vector
(their slice is zeroed after attention, before the output projection), so
masking needs no retraining and leaves every shape intact. Only encoder
self-attention and cross-attention heads are maskable; decoder
self-attention exists but is outside the analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .core import AttnType, HeadId, EMPTY_MASK
from .data import BOS_ID, EOS_ID, PAD_ID

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 64
    d_model: int = 64
    heads: int = 4
    enc_layers: int = 4
    dec_layers: int = 2
    ffn: int = 128
    max_len: int = 24
    seed: int = 0

    def __post_init__(self):
        if min(self.vocab_size, self.d_model, self.heads, self.enc_layers,
               self.dec_layers, self.ffn) < 1:
            raise ValueError("all model dimensions must be >= 1")
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.max_len < 4:
            raise ValueError("max_len must leave room for tag/BOS plus EOS")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads


DEFAULT_CONFIG = ModelConfig()


def sinusoidal_positions(max_len: int, d_model: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    dim = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, dim / d_model)
    table = np.zeros((max_len, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return table.astype(dtype)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names and shapes, in a fixed order."""
    d, f, v = config.d_model, config.ffn, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "src_emb": (v, d),
        "tgt_emb": (v, d),
    }

    def attn(prefix):
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{w}"] = (d, d)

    def ln(prefix):
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    def ffn(prefix):
        shapes[f"{prefix}.w1"] = (d, f)
        shapes[f"{prefix}.b1"] = (f,)
        shapes[f"{prefix}.w2"] = (f, d)
        shapes[f"{prefix}.b2"] = (d,)

    for i in range(config.enc_layers):
        ln(f"enc{i}.ln1")
        attn(f"enc{i}.self")
        ln(f"enc{i}.ln2")
        ffn(f"enc{i}.ffn")
    ln("enc.ln")
    for i in range(config.dec_layers):
        ln(f"dec{i}.ln1")
        attn(f"dec{i}.self")
        ln(f"dec{i}.ln2")
        attn(f"dec{i}.cross")
        ln(f"dec{i}.ln3")
        ffn(f"dec{i}.ffn")
    ln("dec.ln")
    shapes["out.w"] = (d, v)
    shapes["out.b"] = (v,)
    return shapes


def init_params(config: ModelConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """Seeded initialization: Xavier-uniform matrices, N(0, d^-1/2) embeddings,
    identity layer norms, zero biases. Draw order follows param_shapes."""
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if name in ("src_emb", "tgt_emb"):
            arr = rng.normal(0.0, config.d_model**-0.5, size=shape)
        elif leaf in ("g",):
            arr = np.ones(shape)
        elif leaf in ("b", "b1", "b2") or name == "out.b":
            arr = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            arr = rng.uniform(-limit, limit, size=shape)
        params[name] = np.ascontiguousarray(arr, dtype=dtype)
    return params


def mask_by_layer(mask: Iterable[HeadId], attn: AttnType, layer: int) -> list[int]:
    return sorted(h.head for h in mask if h.attn is attn and h.layer == layer)


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    src: np.ndarray      # (B, S) int64, lang tag + content + EOS, PAD-padded
    tgt_in: np.ndarray   # (B, T) int64, BOS + content
    tgt_out: np.ndarray  # (B, T) int64, content + EOS

    @property
    def size(self) -> int:
        return self.src.shape[0]


def tokens_to_ids(tokens: Sequence[str], vocab_size: int) -> list[int]:
    ids = []
    for tok in tokens:
        try:
            t = int(tok)
        except ValueError:
            raise ValueError(f"token {tok!r} is not an integer id") from None
        if not 0 <= t < vocab_size:
            raise ValueError(f"token id {t} outside vocabulary of size {vocab_size}")
        ids.append(t)
    return ids


def build_batch(examples: Sequence[tuple[int, Sequence[int], Sequence[int]]],
                config: ModelConfig) -> Batch:
    """Pack (lang_tag_id, src_ids, tgt_ids) examples into padded arrays."""
    s_max = max(len(s) for _, s, _ in examples) + 2
    t_max = max(len(t) for _, _, t in examples) + 1
    if s_max > config.max_len or t_max > config.max_len:
        raise ValueError("sentence longer than model max_len")
    n = len(examples)
    src = np.full((n, s_max), PAD_ID, dtype=np.int64)
    tgt_in = np.full((n, t_max), PAD_ID, dtype=np.int64)
    tgt_out = np.full((n, t_max), PAD_ID, dtype=np.int64)
    for i, (tag, s, t) in enumerate(examples):
        src[i, 0] = tag
        src[i, 1 : 1 + len(s)] = s
        src[i, 1 + len(s)] = EOS_ID
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1 : 1 + len(t)] = t
        tgt_out[i, : len(t)] = t
        tgt_out[i, len(t)] = EOS_ID
    return Batch(src, tgt_in, tgt_out)


# ---------------------------------------------------------------------------
# forward / backward pieces; every *_fwd fills a cache its *_bwd consumes
# ---------------------------------------------------------------------------


def _ln_fwd(params, prefix, x, cache):
    y, mean, rstd = kernels.layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.b"])
    cache[prefix] = (x, mean, rstd)
    return y


def _ln_bwd(params, prefix, dy, cache, grads):
    x, mean, rstd = cache[prefix]
    dx, dg, db = kernels.layer_norm_grad(dy, x, params[f"{prefix}.g"], mean, rstd)
    grads[f"{prefix}.g"] += dg
    grads[f"{prefix}.b"] += db
    return dx


def _split_heads(x, heads):
    b, t, d = x.shape
    return np.ascontiguousarray(x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3))


def _merge_heads(x):
    b, h, t, hd = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, t, h * hd)


def _attn_fwd(params, prefix, q_in, kv_in, bias, config, zero_heads, cache,
              instrument=None, instrument_key=None):
    """Multi-head attention; heads listed in zero_heads contribute nothing.

    bias is an additive (B|1, 1, Tq, Tk) array of 0/-inf, or None.
    Returns (out, probs) with probs (B, H, Tq, Tk) post-softmax.
    """
    h = config.heads
    scale = 1.0 / math.sqrt(config.head_dim)
    q = _split_heads(q_in @ params[f"{prefix}.wq"], h)
    k = _split_heads(kv_in @ params[f"{prefix}.wk"], h)
    v = _split_heads(kv_in @ params[f"{prefix}.wv"], h)
    scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * scale
    if bias is not None:
        scores = scores + bias
    probs = kernels.softmax_lastaxis(scores)
    ctx = np.matmul(probs, v)
    if zero_heads:
        ctx[:, zero_heads] = 0.0
    if instrument is not None:
        for head in range(h):
            instrument[(*instrument_key, head)] = float(np.linalg.norm(ctx[:, head]))
    merged = _merge_heads(ctx)
    out = merged @ params[f"{prefix}.wo"]
    cache[prefix] = (q_in, kv_in, q, k, v, probs, merged, zero_heads)
    return out, probs


def _attn_bwd(params, prefix, dout, config, cache, grads):
    q_in, kv_in, q, k, v, probs, merged, zero_heads = cache[prefix]
    h = config.heads
    scale = 1.0 / math.sqrt(config.head_dim)
    d = config.d_model
    dout2 = dout.reshape(-1, d)
    grads[f"{prefix}.wo"] += merged.reshape(-1, d).T @ dout2
    dmerged = dout @ params[f"{prefix}.wo"].T
    dctx = _split_heads(dmerged, h)
    if zero_heads:
        dctx[:, zero_heads] = 0.0
    dprobs = np.matmul(dctx, v.transpose(0, 1, 3, 2))
    dv = np.matmul(probs.transpose(0, 1, 3, 2), dctx)
    dscores = kernels.softmax_grad(probs, dprobs) * scale
    dq = np.matmul(dscores, k)
    dk = np.matmul(dscores.transpose(0, 1, 3, 2), q)
    dq_flat = _merge_heads(dq).reshape(-1, d)
    dk_flat = _merge_heads(dk).reshape(-1, d)
    dv_flat = _merge_heads(dv).reshape(-1, d)
    q2 = q_in.reshape(-1, d)
    kv2 = kv_in.reshape(-1, d)
    grads[f"{prefix}.wq"] += q2.T @ dq_flat
    grads[f"{prefix}.wk"] += kv2.T @ dk_flat
    grads[f"{prefix}.wv"] += kv2.T @ dv_flat
    dq_in = (dq_flat @ params[f"{prefix}.wq"].T).reshape(q_in.shape)
    dkv = (dk_flat @ params[f"{prefix}.wk"].T + dv_flat @ params[f"{prefix}.wv"].T)
    return dq_in, dkv.reshape(kv_in.shape)


def _ffn_fwd(params, prefix, x, cache):
    pre = x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"]
    act = kernels.gelu(pre)
    out = act @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]
    cache[prefix] = (x, pre, act)
    return out


def _ffn_bwd(params, prefix, dout, cache, grads):
    x, pre, act = cache[prefix]
    f = act.shape[-1]
    d = x.shape[-1]
    dout2 = dout.reshape(-1, d)
    grads[f"{prefix}.w2"] += act.reshape(-1, f).T @ dout2
    grads[f"{prefix}.b2"] += dout2.sum(axis=0)
    dact = dout @ params[f"{prefix}.w2"].T
    dpre = kernels.gelu_grad(pre, dact)
    dpre2 = dpre.reshape(-1, f)
    grads[f"{prefix}.w1"] += x.reshape(-1, d).T @ dpre2
    grads[f"{prefix}.b1"] += dpre2.sum(axis=0)
    return (dpre2 @ params[f"{prefix}.w1"].T).reshape(x.shape)


def _embed(params, name, ids, config, positions):
    x = params[name][ids] * math.sqrt(config.d_model)
    return x + positions[: ids.shape[1]]


def _embed_bwd(name, ids, dx, config, grads):
    d = config.d_model
    np.add.at(grads[name], ids.ravel(), dx.reshape(-1, d) * math.sqrt(d))


def key_pad_bias(ids: np.ndarray, dtype) -> np.ndarray:
    """(B, 1, 1, S) additive bias: -inf on PAD key positions."""
    bias = np.where(ids == PAD_ID, NEG_INF, 0.0).astype(dtype)
    return bias[:, None, None, :]


def causal_bias(t: int, dtype) -> np.ndarray:
    bias = np.triu(np.full((t, t), NEG_INF), k=1).astype(dtype)
    return bias[None, None]


def encoder_forward(params, config, src, mask=EMPTY_MASK, cache=None,
                    capture=False, instrument=None):
    """Run the encoder stack. Returns (enc_out, per-layer self-attn probs)."""
    dtype = params["src_emb"].dtype
    positions = sinusoidal_positions(config.max_len, config.d_model, dtype)
    x = _embed(params, "src_emb", src, config, positions)
    bias = key_pad_bias(src, dtype)
    cache = cache if cache is not None else {}
    probs_all = []
    for i in range(config.enc_layers):
        a = _ln_fwd(params, f"enc{i}.ln1", x, cache)
        zero = mask_by_layer(mask, AttnType.ENC_SELF, i)
        sa, probs = _attn_fwd(params, f"enc{i}.self", a, a, bias, config, zero, cache,
                              instrument, (AttnType.ENC_SELF, i))
        x = x + sa
        f = _ln_fwd(params, f"enc{i}.ln2", x, cache)
        x = x + _ffn_fwd(params, f"enc{i}.ffn", f, cache)
        if capture:
            probs_all.append(probs)
    out = _ln_fwd(params, "enc.ln", x, cache)
    cache["enc_stack"] = src
    return out, probs_all


def _encoder_backward(params, config, denc_out, cache, grads):
    dx = _ln_bwd(params, "enc.ln", denc_out, cache, grads)
    for i in reversed(range(config.enc_layers)):
        df = _ffn_bwd(params, f"enc{i}.ffn", dx, cache, grads)
        dx = dx + _ln_bwd(params, f"enc{i}.ln2", df, cache, grads)
        dq, dkv = _attn_bwd(params, f"enc{i}.self", dx, config, cache, grads)
        dx = dx + _ln_bwd(params, f"enc{i}.ln1", dq + dkv, cache, grads)
    _embed_bwd("src_emb", cache["enc_stack"], dx, config, grads)


def decoder_forward(params, config, tgt_in, enc_out, src_bias, mask=EMPTY_MASK,
                    cache=None, capture=False, instrument=None):
    """Teacher-forced decoder stack. Returns (logits, per-layer cross probs)."""
    dtype = params["tgt_emb"].dtype
    positions = sinusoidal_positions(config.max_len, config.d_model, dtype)
    y = _embed(params, "tgt_emb", tgt_in, config, positions)
    self_bias = causal_bias(tgt_in.shape[1], dtype)
    cache = cache if cache is not None else {}
    probs_all = []
    for i in range(config.dec_layers):
        a = _ln_fwd(params, f"dec{i}.ln1", y, cache)
        sa, _ = _attn_fwd(params, f"dec{i}.self", a, a, self_bias, config, [], cache)
        y = y + sa
        c = _ln_fwd(params, f"dec{i}.ln2", y, cache)
        zero = mask_by_layer(mask, AttnType.CROSS, i)
        ca, probs = _attn_fwd(params, f"dec{i}.cross", c, enc_out, src_bias, config,
                              zero, cache, instrument, (AttnType.CROSS, i))
        y = y + ca
        f = _ln_fwd(params, f"dec{i}.ln3", y, cache)
        y = y + _ffn_fwd(params, f"dec{i}.ffn", f, cache)
        if capture:
            probs_all.append(probs)
    out = _ln_fwd(params, "dec.ln", y, cache)
    logits = out @ params["out.w"] + params["out.b"]
    cache["dec_stack"] = (tgt_in, out)
    return logits, probs_all


def _decoder_backward(params, config, dlogits, cache, grads):
    tgt_in, dec_out = cache["dec_stack"]
    d = config.d_model
    grads["out.w"] += dec_out.reshape(-1, d).T @ dlogits.reshape(-1, dlogits.shape[-1])
    grads["out.b"] += dlogits.reshape(-1, dlogits.shape[-1]).sum(axis=0)
    dy = _ln_bwd(params, "dec.ln", dlogits @ params["out.w"].T, cache, grads)
    denc = None
    for i in reversed(range(config.dec_layers)):
        df = _ffn_bwd(params, f"dec{i}.ffn", dy, cache, grads)
        dy = dy + _ln_bwd(params, f"dec{i}.ln3", df, cache, grads)
        dq, dkv = _attn_bwd(params, f"dec{i}.cross", dy, config, cache, grads)
        denc = dkv if denc is None else denc + dkv
        dy = dy + _ln_bwd(params, f"dec{i}.ln2", dq, cache, grads)
        dq, dkv = _attn_bwd(params, f"dec{i}.self", dy, config, cache, grads)
        dy = dy + _ln_bwd(params, f"dec{i}.ln1", dq + dkv, cache, grads)
    _embed_bwd("tgt_emb", tgt_in, dy, config, grads)
    return denc


def _cross_entropy(logits, labels):
    """Mean CE over non-PAD labels. Returns (loss, dlogits)."""
    v = logits.shape[-1]
    flat = logits.reshape(-1, v)
    lab = labels.ravel()
    valid = lab != PAD_ID
    n = int(valid.sum())
    if n == 0:
        raise ValueError("batch has no unpadded target tokens")
    m = flat.max(axis=1, keepdims=True)
    shifted = flat - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    loss = float(-logp[np.arange(flat.shape[0]), lab][valid].sum() / n)
    dflat = np.exp(logp)
    dflat[np.arange(flat.shape[0]), lab] -= 1.0
    dflat[~valid] = 0.0
    dflat /= n
    return loss, dflat.reshape(logits.shape).astype(logits.dtype, copy=False)


def loss_and_grads(params, config, batch: Batch, mask=EMPTY_MASK,
                   want_grads=True, instrument=None):
    """Teacher-forced cross-entropy on one batch; gradients for every param."""
    cache: dict = {}
    enc_out, _ = encoder_forward(params, config, batch.src, mask, cache,
                                 instrument=instrument)
    src_bias = key_pad_bias(batch.src, enc_out.dtype)
    logits, _ = decoder_forward(params, config, batch.tgt_in, enc_out, src_bias,
                                mask, cache, instrument=instrument)
    loss, dlogits = _cross_entropy(logits, batch.tgt_out)
    if not math.isfinite(loss):
        return loss, None
    if not want_grads:
        return loss, None
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    denc = _decoder_backward(params, config, dlogits, cache, grads)
    _encoder_backward(params, config, denc, cache, grads)
    return loss, grads


def token_accuracy(params, config, batch: Batch, mask=EMPTY_MASK) -> float:
    """Teacher-forced next-token accuracy over non-PAD targets."""
    cache: dict = {}
    enc_out, _ = encoder_forward(params, config, batch.src, mask, cache)
    logits, _ = decoder_forward(params, config, batch.tgt_in, enc_out,
                                key_pad_bias(batch.src, enc_out.dtype), mask, cache)
    pred = logits.argmax(axis=-1)
    valid = batch.tgt_out != PAD_ID
    return float((pred[valid] == batch.tgt_out[valid]).mean())
