"""Numeric kernels with a numba fast path and a pure-numpy fallback.

The transformer's matrix products go through BLAS (``np.matmul``) on both
paths; what lives here are the fused elementwise/reduction loops that numpy
would otherwise evaluate through a chain of temporaries: softmax and its
gradient, layer norm and its gradient, GELU, and the Adam parameter update.

Backend selection is done once at import time from the ``HEADPRUNE_BACKEND``
environment variable:

* ``auto``  (default) -- numba if importable, else numpy
* ``numba`` -- require numba, fail loudly if missing
* ``numpy`` -- force the pure-numpy path

Both paths are deterministic run-to-run; they are not guaranteed to agree
bitwise with each other (different summation orders), only to ~1e-6 in f32.
``benchmarks/bench_kernels.py`` times one against the other.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_VAR = "HEADPRUNE_BACKEND"

_GELU_C0 = math.sqrt(2.0 / math.pi)
_GELU_C1 = 0.044715


def _select_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _select_backend()


# ---------------------------------------------------------------------------
# pure-numpy implementations (always available; the reference path)
# ---------------------------------------------------------------------------


def _softmax_np(x2):
    m = np.max(x2, axis=1, keepdims=True)
    e = np.exp(x2 - m)
    e /= np.sum(e, axis=1, keepdims=True)
    return e


def _softmax_grad_np(p2, dp2):
    dot = np.sum(p2 * dp2, axis=1, keepdims=True)
    return p2 * (dp2 - dot)


def _layer_norm_np(x2, gain, bias, eps):
    mean = x2.mean(axis=1)
    xc = x2 - mean[:, None]
    var = np.mean(xc * xc, axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = xc * rstd[:, None] * gain + bias
    return y.astype(x2.dtype, copy=False), mean, rstd


def _layer_norm_grad_np(dy2, x2, gain, mean, rstd):
    xhat = (x2 - mean[:, None]) * rstd[:, None]
    dxhat = dy2 * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = np.mean(dxhat * xhat, axis=1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    dgain = np.sum(dy2 * xhat, axis=0)
    dbias = np.sum(dy2, axis=0)
    return dx.astype(x2.dtype, copy=False), dgain, dbias


def _gelu_np(x):
    inner = _GELU_C0 * (x + _GELU_C1 * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_grad_np(x, dy):
    inner = _GELU_C0 * (x + _GELU_C1 * x * x * x)
    t = np.tanh(inner)
    sech2 = 1.0 - t * t
    local = 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * x * x)
    return dy * local


def _adam_update_np(p, g, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _softmax_nb(x2, out):
        rows, n = x2.shape
        for r in range(rows):
            hi = x2[r, 0]
            for j in range(1, n):
                if x2[r, j] > hi:
                    hi = x2[r, j]
            s = 0.0
            for j in range(n):
                e = math.exp(x2[r, j] - hi)
                out[r, j] = e
                s += e
            inv = 1.0 / s
            for j in range(n):
                out[r, j] *= inv

    @njit(cache=True)
    def _softmax_grad_nb(p2, dp2, out):
        rows, n = p2.shape
        for r in range(rows):
            dot = 0.0
            for j in range(n):
                dot += p2[r, j] * dp2[r, j]
            for j in range(n):
                out[r, j] = p2[r, j] * (dp2[r, j] - dot)

    @njit(cache=True)
    def _layer_norm_nb(x2, gain, bias, eps, y, mean, rstd):
        rows, n = x2.shape
        for r in range(rows):
            s = 0.0
            for j in range(n):
                s += x2[r, j]
            mu = s / n
            acc = 0.0
            for j in range(n):
                d = x2[r, j] - mu
                acc += d * d
            rs = 1.0 / math.sqrt(acc / n + eps)
            mean[r] = mu
            rstd[r] = rs
            for j in range(n):
                y[r, j] = (x2[r, j] - mu) * rs * gain[j] + bias[j]

    @njit(cache=True)
    def _layer_norm_grad_nb(dy2, x2, gain, mean, rstd, dx, dgain, dbias):
        rows, n = x2.shape
        for j in range(n):
            dgain[j] = 0.0
            dbias[j] = 0.0
        for r in range(rows):
            mu = mean[r]
            rs = rstd[r]
            m1 = 0.0
            m2 = 0.0
            for j in range(n):
                xh = (x2[r, j] - mu) * rs
                dxh = dy2[r, j] * gain[j]
                m1 += dxh
                m2 += dxh * xh
                dgain[j] += dy2[r, j] * xh
                dbias[j] += dy2[r, j]
            m1 /= n
            m2 /= n
            for j in range(n):
                xh = (x2[r, j] - mu) * rs
                dxh = dy2[r, j] * gain[j]
                dx[r, j] = rs * (dxh - m1 - xh * m2)

    @njit(cache=True)
    def _gelu_nb(x, out):
        for i in range(x.size):
            v = x[i]
            inner = _GELU_C0 * (v + _GELU_C1 * v * v * v)
            out[i] = 0.5 * v * (1.0 + math.tanh(inner))

    @njit(cache=True)
    def _gelu_grad_nb(x, dy, out):
        for i in range(x.size):
            v = x[i]
            inner = _GELU_C0 * (v + _GELU_C1 * v * v * v)
            t = math.tanh(inner)
            sech2 = 1.0 - t * t
            local = 0.5 * (1.0 + t) + 0.5 * v * sech2 * _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * v * v)
            out[i] = dy[i] * local

    @njit(cache=True)
    def _adam_update_nb(p, g, m, v, lr, beta1, beta2, eps, t):
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for i in range(p.size):
            gi = g[i]
            mi = beta1 * m[i] + (1.0 - beta1) * gi
            vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / c1) / (math.sqrt(vi / c2) + eps)


# ---------------------------------------------------------------------------
# public API: shape-preserving wrappers around the active backend
# ---------------------------------------------------------------------------


def _rows(x):
    x = np.ascontiguousarray(x)
    return x, x.reshape(-1, x.shape[-1])


def softmax_lastaxis(scores: np.ndarray) -> np.ndarray:
    """Softmax over the last axis; -inf entries get probability 0.

    Every row must contain at least one finite entry.
    """
    scores, x2 = _rows(scores)
    if BACKEND == "numba":
        out = np.empty_like(x2)
        _softmax_nb(x2, out)
        return out.reshape(scores.shape)
    return _softmax_np(x2).reshape(scores.shape)


def softmax_grad(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Backprop through softmax_lastaxis: d(scores) from d(probs)."""
    probs, p2 = _rows(probs)
    _, dp2 = _rows(dprobs)
    if BACKEND == "numba":
        out = np.empty_like(p2)
        _softmax_grad_nb(p2, dp2, out)
        return out.reshape(probs.shape)
    return _softmax_grad_np(p2, dp2).reshape(probs.shape)


def layer_norm(x, gain, bias, eps=1e-5):
    """Layer norm over the last axis. Returns (y, mean, rstd) for backward."""
    x, x2 = _rows(x)
    if BACKEND == "numba":
        y = np.empty_like(x2)
        mean = np.empty(x2.shape[0], dtype=x2.dtype)
        rstd = np.empty(x2.shape[0], dtype=x2.dtype)
        _layer_norm_nb(x2, gain, bias, x2.dtype.type(eps), y, mean, rstd)
        return y.reshape(x.shape), mean, rstd
    y, mean, rstd = _layer_norm_np(x2, gain, bias, x2.dtype.type(eps))
    return y.reshape(x.shape), mean.astype(x2.dtype, copy=False), rstd.astype(x2.dtype, copy=False)


def layer_norm_grad(dy, x, gain, mean, rstd):
    """Backprop through layer_norm. Returns (dx, dgain, dbias)."""
    x, x2 = _rows(x)
    _, dy2 = _rows(dy)
    if BACKEND == "numba":
        dx = np.empty_like(x2)
        dgain = np.empty(x2.shape[-1], dtype=x2.dtype)
        dbias = np.empty(x2.shape[-1], dtype=x2.dtype)
        _layer_norm_grad_nb(dy2, x2, gain, mean, rstd, dx, dgain, dbias)
        return dx.reshape(x.shape), dgain, dbias
    dx, dgain, dbias = _layer_norm_grad_np(dy2, x2, gain, mean, rstd)
    return dx.reshape(x.shape), dgain.astype(x2.dtype, copy=False), dbias.astype(x2.dtype, copy=False)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU activation (tanh approximation); smooth, so finite differences behave."""
    if BACKEND == "numba":
        x = np.ascontiguousarray(x)
        out = np.empty_like(x)
        _gelu_nb(x.ravel(), out.ravel())
        return out
    return _gelu_np(x).astype(x.dtype, copy=False)


def gelu_grad(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    if BACKEND == "numba":
        x = np.ascontiguousarray(x)
        dy = np.ascontiguousarray(dy)
        out = np.empty_like(x)
        _gelu_grad_nb(x.ravel(), dy.ravel(), out.ravel())
        return out
    return _gelu_grad_np(x, dy).astype(x.dtype, copy=False)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    """One Adam step with bias correction, updating p, m, v in place.

    All four arrays must be C-contiguous and share one dtype; t is 1-based.
    """
    if BACKEND == "numba":
        _adam_update_nb(p.ravel(), g.ravel(), m.ravel(), v.ravel(), lr, beta1, beta2, eps, t)
    else:
        _adam_update_np(p.ravel(), g.ravel(), m.ravel(), v.ravel(), lr, beta1, beta2, eps, t)
