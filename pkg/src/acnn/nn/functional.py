"""Stateless forward/backward kernels.

All image tensors are laid out ``[N, C, H, W]``. Convolution is
cross-correlation (no kernel flip) with stride 1. Filters may be shared
(``[F, C, kh, kw]``) or generated per sample (``[N, F, C, kh, kw]``), the
latter being what adaptive layers produce when every sample in a batch
carries its own side information.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgument, NumericError

PADDINGS = ("valid", "same")

# im2col buffers larger than this (elements) are processed in batch chunks
_COLS_BUDGET = 48_000_000


def _check_finite(x, what="input"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")


def _conv_geometry(x, filters, padding):
    if x.ndim != 4:
        raise InvalidArgument(f"conv input must be 4-D [N,C,H,W], got shape {x.shape}")
    if filters.ndim == 5:
        if filters.shape[0] != x.shape[0]:
            raise InvalidArgument("per-sample filters must match the batch size")
        F, C, kh, kw = filters.shape[1:]
    elif filters.ndim == 4:
        F, C, kh, kw = filters.shape
    else:
        raise InvalidArgument(f"filters must be 4-D or 5-D, got shape {filters.shape}")
    if C != x.shape[1]:
        raise InvalidArgument(f"filter channels {C} != input channels {x.shape[1]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise InvalidArgument("kernel sizes must be odd")
    if padding not in PADDINGS:
        raise InvalidArgument(f"padding must be one of {PADDINGS}")
    if padding == "same":
        ph, pw = kh // 2, kw // 2
    else:
        ph = pw = 0
    Ho = x.shape[2] + 2 * ph - kh + 1
    Wo = x.shape[3] + 2 * pw - kw + 1
    if Ho < 1 or Wo < 1:
        raise InvalidArgument("kernel larger than input for valid padding")
    return F, C, kh, kw, ph, pw, Ho, Wo


def im2col(x, kh, kw, ph, pw):
    """Unfold ``x`` into ``[N, C*kh*kw, Ho*Wo]`` columns (row-major over C, kh, kw)."""
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    N, C, Ho, Wo = win.shape[:4]
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(N, C * kh * kw, Ho * Wo)


def col2im(cols, shape, kh, kw, ph, pw):
    """Adjoint of :func:`im2col`: scatter-add columns back onto the input grid."""
    N, C, H, W = shape
    Hp, Wp = H + 2 * ph, W + 2 * pw
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    cols = cols.reshape(N, C, kh, kw, Ho, Wo)
    out = np.zeros((N, C, Hp, Wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + Ho, j:j + Wo] += cols[:, :, i, j]
    return out[:, :, ph:ph + H, pw:pw + W]


def _chunks(N, per_sample):
    step = max(1, _COLS_BUDGET // max(per_sample, 1))
    return [slice(i, min(i + step, N)) for i in range(0, N, step)]


def conv2d_forward(x, filters, bias, padding="same", return_cols=False):
    """Cross-correlate ``x`` with ``filters`` and add ``bias``.

    ``bias`` is ``[F]`` for shared filters or ``[N, F]`` for per-sample ones.
    With ``return_cols`` the unfolded input is also returned (``None`` when
    the batch had to be chunked) for reuse by :func:`conv2d_backward`.
    """
    F, C, kh, kw, ph, pw, Ho, Wo = _conv_geometry(x, filters, padding)
    _check_finite(x)
    N = x.shape[0]
    K = C * kh * kw
    per_sample = filters.ndim == 5
    w2d = filters.reshape(N, F, K) if per_sample else filters.reshape(F, K)
    out = np.empty((N, F, Ho * Wo), dtype=np.result_type(x, filters))
    chunks = _chunks(N, K * Ho * Wo)
    for sl in chunks:
        cols = im2col(x[sl], kh, kw, ph, pw)
        w = w2d[sl] if per_sample else w2d
        np.matmul(w, cols, out=out[sl])
    b = bias.reshape(N, F, 1) if per_sample else bias.reshape(1, F, 1)
    out += b
    out = out.reshape(N, F, Ho, Wo)
    if return_cols:
        return out, (cols if len(chunks) == 1 else None)
    return out


def conv2d_backward(x, filters, grad_out, padding="same", cols=None):
    """Return ``(grad_input, grad_filters, grad_bias)`` for :func:`conv2d_forward`.

    Gradients with respect to per-sample filters keep the batch axis.
    ``cols`` may carry the unfolded input saved by the forward pass.
    """
    F, C, kh, kw, ph, pw, Ho, Wo = _conv_geometry(x, filters, padding)
    N = x.shape[0]
    if grad_out.shape != (N, F, Ho, Wo):
        raise InvalidArgument(f"grad_out shape {grad_out.shape} != {(N, F, Ho, Wo)}")
    K = C * kh * kw
    per_sample = filters.ndim == 5
    w2d = filters.reshape(N, F, K) if per_sample else filters.reshape(F, K)
    g = grad_out.reshape(N, F, Ho * Wo)
    dtype = np.result_type(x, filters, grad_out)
    grad_x = np.empty(x.shape, dtype=dtype)
    if per_sample:
        grad_w = np.empty((N, F, K), dtype=dtype)
    else:
        grad_w = np.zeros((F, K), dtype=dtype)
    chunks = _chunks(N, K * Ho * Wo)
    if cols is not None and len(chunks) != 1:
        cols = None
    for sl in chunks:
        if cols is None or len(chunks) != 1:
            cols = im2col(x[sl], kh, kw, ph, pw)
        gw = np.matmul(g[sl], cols.transpose(0, 2, 1))
        if per_sample:
            grad_w[sl] = gw
            gcols = np.matmul(w2d[sl].transpose(0, 2, 1), g[sl])
        else:
            grad_w += gw.sum(axis=0)
            gcols = np.matmul(w2d.T, g[sl])
        grad_x[sl] = col2im(gcols, x[sl].shape, kh, kw, ph, pw)
    grad_b = g.sum(axis=2)
    if per_sample:
        grad_w = grad_w.reshape(filters.shape)
    else:
        grad_w = grad_w.reshape(filters.shape)
        grad_b = grad_b.sum(axis=0)
    return grad_x, grad_w, grad_b


def maxpool2_forward(x, with_index=True):
    """2x2 / stride-2 max pooling in ceil mode.

    Returns the pooled tensor and the index (0..3, row-major, first maximum
    wins) of the winning element in each window; only the pooled tensor when
    ``with_index`` is false.
    """
    if x.ndim != 4:
        raise InvalidArgument(f"pool input must be 4-D, got shape {x.shape}")
    N, C, H, W = x.shape
    if H < 1 or W < 1:
        raise InvalidArgument("empty spatial extent")
    H2, W2 = -(-H // 2), -(-W // 2)
    if H % 2 or W % 2:
        xp = np.full((N, C, 2 * H2, 2 * W2), -np.inf, dtype=x.dtype)
        xp[:, :, :H, :W] = x
    else:
        xp = x
    a, b = xp[:, :, 0::2, 0::2], xp[:, :, 0::2, 1::2]
    c, d = xp[:, :, 1::2, 0::2], xp[:, :, 1::2, 1::2]
    top, bot = np.maximum(a, b), np.maximum(c, d)
    out = np.maximum(top, bot)
    if not with_index:
        return out
    idx = np.where(top >= bot, np.where(a >= b, 0, 1), np.where(c >= d, 2, 3)).astype(np.uint8)
    return out, idx


def maxpool2_backward(grad_out, idx, input_shape):
    N, C, H, W = input_shape
    H2, W2 = grad_out.shape[2:]
    full = np.zeros((N, C, 2 * H2, 2 * W2), dtype=grad_out.dtype)
    for k, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        full[:, :, i::2, j::2] = np.where(idx == k, grad_out, 0)
    return full[:, :, :H, :W]


def _neg_pow(base, beta):
    """``base ** -beta``; the common 0.75 case via square roots (much faster than pow)."""
    if beta == 0.75:
        r = np.sqrt(base)
        return 1.0 / (r * np.sqrt(r))
    return base ** -beta


def _channel_window_sum(sq, n):
    """Sum over a centred window of ``n`` channels (zero beyond the edges)."""
    half = n // 2
    C = sq.shape[1]
    out = sq.copy()
    for d in range(1, half + 1):
        if d >= C:
            break
        out[:, d:] += sq[:, :-d]
        out[:, :-d] += sq[:, d:]
    return out


def lrn_forward(x, k=2.0, n=5, alpha=1e-4, beta=0.75):
    """Cross-channel local response normalization.

    ``out[c] = x[c] / (k + alpha/n * sum_{c' in window(c)} x[c']**2) ** beta``.
    Returns ``(out, denom)`` where ``denom`` is the bracketed base.
    """
    if x.ndim != 4:
        raise InvalidArgument(f"LRN input must be 4-D, got shape {x.shape}")
    if n % 2 == 0 or alpha <= 0 or beta <= 0:
        raise InvalidArgument("LRN requires odd n, alpha > 0, beta > 0")
    denom = k + (alpha / n) * _channel_window_sum(x * x, n)
    return x * _neg_pow(denom, beta), denom


def lrn_backward(x, denom, grad_out, n=5, alpha=1e-4, beta=0.75):
    scale = _neg_pow(denom, beta)
    t = grad_out * x * scale / denom
    return grad_out * scale - (2.0 * alpha * beta / n) * x * _channel_window_sum(t, n)


def batchnorm_forward(x, gamma, beta, eps=1e-5):
    """Per-channel batch normalization using batch statistics.

    Returns ``(out, cache)``; ``cache`` holds what the backward pass needs
    plus the batch mean/variance for running-statistics updates.
    """
    axes = (0, 2, 3)
    if x.shape[0] * x.shape[2] * x.shape[3] < 2:
        raise InvalidArgument("batch norm in train mode needs at least 2 values per channel")
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv, mean, var)


def batchnorm_infer(x, gamma, beta, mean, var, eps=1e-5):
    inv = 1.0 / np.sqrt(var + eps)
    return (gamma * inv)[None, :, None, None] * (x - mean[None, :, None, None]) + beta[None, :, None, None]


def batchnorm_backward(grad_out, gamma, cache):
    xhat, inv, _, _ = cache
    axes = (0, 2, 3)
    m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    grad_beta = grad_out.sum(axis=axes)
    grad_gamma = (grad_out * xhat).sum(axis=axes)
    gx = (gamma * inv / m)[None, :, None, None] * (
        m * grad_out - grad_beta[None, :, None, None] - xhat * grad_gamma[None, :, None, None]
    )
    return gx, grad_gamma, grad_beta


def dense_forward(x, weights, bias):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise InvalidArgument(f"dense shapes incompatible: {x.shape} @ {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise InvalidArgument(f"bias shape {bias.shape} != ({weights.shape[1]},)")
    return x @ weights + bias


def dense_backward(x, weights, grad_out):
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


ACTIVATIONS = ("linear", "relu", "leaky_relu", "sigmoid", "tanh")


def activation_forward(x, kind, slope=0.01):
    if kind == "linear":
        return x
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "leaky_relu":
        if not 0 < slope < 1:
            raise InvalidArgument("leaky slope must lie in (0, 1)")
        return np.where(x > 0, x, x * slope)
    if kind == "sigmoid":
        # split by sign so exp never overflows
        e = np.exp(-np.abs(x))
        return np.where(x >= 0, 1 / (1 + e), e / (1 + e))
    if kind == "tanh":
        return np.tanh(x)
    raise InvalidArgument(f"unknown activation {kind!r}")


def activation_backward(x, y, grad_out, kind, slope=0.01):
    """Gradient given pre-activation ``x`` and post-activation ``y``."""
    if kind == "linear":
        return grad_out
    if kind == "relu":
        return grad_out * (x > 0)
    if kind == "leaky_relu":
        return np.where(x > 0, grad_out, grad_out * slope)
    if kind == "sigmoid":
        return grad_out * y * (1 - y)
    if kind == "tanh":
        return grad_out * (1 - y * y)
    raise InvalidArgument(f"unknown activation {kind!r}")


def loss_mse(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise InvalidArgument(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_softmax_xent(logits, labels):
    """Mean softmax cross-entropy over the batch and its gradient."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise InvalidArgument("logits must be [N,K] and labels [N]")
    K = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise InvalidArgument(f"labels must lie in [0, {K})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(logits.shape[0])
    loss = float(np.mean(logsumexp - shifted[rows, labels]))
    grad = np.exp(shifted - logsumexp[:, None])
    grad[rows, labels] -= 1
    return loss, grad / logits.shape[0]
