"""Layer primitives used by the Inception/BiLSTM network.

All spatial ops take channels-last tensors, either a single sample
``(H, W, C)`` or a batch ``(N, H, W, C)``; sequence ops take ``(T, D)`` or
``(N, T, D)``.  Heavy ops (conv, batchnorm, LSTM, pooling, loss) are fused
tape records with hand-derived backward rules.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit as _sigmoid

from ibis.errors import ConfigurationError, DimensionError, InputError
from ibis.nn.autograd import Tensor, add, as_tensor, make_op, matmul, mul, reshape

ACTIVATIONS = ("swish", "tanh", "sigmoid")


def _batched(x: Tensor, rank: int) -> tuple[Tensor, bool]:
    if x.ndim == rank:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != rank + 1:
        raise DimensionError(f"expected a rank-{rank} sample or rank-{rank + 1} batch, got shape {x.shape}")
    return x, False


def _unbatch(y: Tensor, squeeze: bool) -> Tensor:
    return reshape(y, y.shape[1:]) if squeeze else y


# ---------------------------------------------------------------------------
# convolution / pooling


def conv_output_size(size: int, kernel: int, stride: int = 1) -> int:
    return (size - kernel) // stride + 1


def conv2d(x: Tensor, weights: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid-padding 2-D convolution; ``weights`` has shape (kh, kw, Cin, Cout)."""
    x, squeeze = _batched(as_tensor(x), 3)
    w = as_tensor(weights)
    if w.ndim != 4:
        raise DimensionError(f"conv weights must be (kh, kw, Cin, Cout), got {w.shape}")
    kh, kw, cin, cout = w.shape
    n, h, wd, c = x.shape
    if c != cin:
        raise DimensionError(f"input has {c} channels but kernel expects {cin}")
    if h < kh or wd < kw:
        raise DimensionError(f"input {h}x{wd} smaller than kernel {kh}x{kw}")
    if stride < 1:
        raise ConfigurationError("stride must be positive")
    ho, wo = conv_output_size(h, kh, stride), conv_output_size(wd, kw, stride)

    win = sliding_window_view(x.data, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # (N, Ho, Wo, C, kh, kw) -> (N*Ho*Wo, kh*kw*C), matching the weight layout
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(-1, kh * kw * cin)
    wmat = w.data.reshape(kh * kw * cin, cout)
    out = cols @ wmat
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, cout)

    def bw(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(w.shape)
        gcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, cin)
        gx = np.zeros(x.shape)
        for i in range(kh):
            for j in range(kw):
                gx[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += gcols[:, :, :, i, j, :]
        gb = g2.sum(axis=0) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, w, as_tensor(bias)) if bias is not None else (x, w)
    return _unbatch(make_op(inputs, out, bw), squeeze)


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing odd rows/columns are dropped.

    The gradient goes to the first maximal element of each window in
    row-major order.
    """
    if window != stride:
        raise ConfigurationError("only non-overlapping pooling (window == stride) is supported")
    x, squeeze = _batched(as_tensor(x), 3)
    n, h, w, c = x.shape
    if h < window or w < window:
        raise DimensionError(f"pooling window {window} larger than input {h}x{w}")
    ho, wo = h // window, w // window
    crop = x.data[:, : ho * window, : wo * window, :]
    blocks = crop.reshape(n, ho, window, wo, window, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, ho, wo, c, window * window)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gblocks = np.zeros(blocks.shape)
        np.put_along_axis(gblocks, idx[..., None], g[..., None], axis=-1)
        gblocks = gblocks.reshape(n, ho, wo, c, window, window).transpose(0, 1, 4, 2, 5, 3)
        gx = np.zeros(x.shape)
        gx[:, : ho * window, : wo * window, :] = gblocks.reshape(n, ho * window, wo * window, c)
        return (gx,)

    return _unbatch(make_op((x,), out, bw), squeeze)


def pad_spatial(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero-pad the two spatial axes of a channels-last tensor."""
    x, squeeze = _batched(as_tensor(x), 3)
    out = np.pad(x.data, ((0, 0), (top, bottom), (left, right), (0, 0)))
    h, w = x.shape[1], x.shape[2]
    return _unbatch(make_op((x,), out, lambda g: (g[:, top:top + h, left:left + w, :],)), squeeze)


def global_avg_pool_2d(x: Tensor) -> Tensor:
    x, squeeze = _batched(as_tensor(x), 3)
    n, h, w, c = x.shape
    return _unbatch(reshape(x, (n, h * w, c)).mean(axis=1), squeeze)


# ---------------------------------------------------------------------------
# normalization / activations


def batchnorm_parameter_count(channels: int) -> int:
    # gamma, beta, running mean, running variance
    return 4 * channels


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.99,
    epsilon: float = 1e-3,
) -> Tensor:
    """Per-channel batch normalization over every axis but the last.

    In training mode the running statistics are updated in place with an
    exponential moving average (``momentum`` weights the old value).
    """
    if epsilon <= 0:
        raise ConfigurationError("batchnorm epsilon must be positive")
    x = as_tensor(x)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm parameters must have shape ({c},)")
    axes = tuple(range(x.ndim - 1))
    gd, bd = gamma.data, beta.data

    if not training:
        scale = gd / np.sqrt(running_var + epsilon)
        xhat = (x.data - running_mean) / np.sqrt(running_var + epsilon)
        out = xhat * gd + bd

        def bw_infer(g):
            return g * scale, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        return make_op((x, gamma, beta), out, bw_infer)

    mu = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mu) * inv
    out = xhat * gd + bd
    m = x.data.size // c
    running_mean *= momentum
    running_mean += (1.0 - momentum) * mu
    running_var *= momentum
    running_var += (1.0 - momentum) * var

    def bw(g):
        gxhat = g * gd
        gx = inv / m * (m * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return make_op((x, gamma, beta), out, bw)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return make_op((x,), s, lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return make_op((x,), t, lambda g: (g * (1.0 - t * t),))


def swish(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    out = x.data * s
    return make_op((x,), out, lambda g: (g * (s + out * (1.0 - s)),))


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "swish":
        return swish(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigurationError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise DimensionError("softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return make_op((x,), p, bw)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) during training."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError("dropout rate must lie in [0, 1)")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigurationError("training-mode dropout needs a seeded generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return make_op((x,), x.data * mask, lambda g: (g * mask,))


def concat(inputs, axis: int = -1) -> Tensor:
    inputs = [as_tensor(t) for t in inputs]
    if len(inputs) == 1:
        return inputs[0]
    ref = inputs[0].shape
    ax = axis % len(ref)
    for t in inputs[1:]:
        if len(t.shape) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(ref, t.shape)) if i != ax):
            raise DimensionError(f"cannot concatenate {ref} with {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in inputs]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in inputs], axis=ax)
    return make_op(inputs, out, lambda g: tuple(np.split(g, splits, axis=ax)))


# ---------------------------------------------------------------------------
# dense / loss


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != weights.shape[0] or bias.shape != (weights.shape[1],):
        raise DimensionError(f"dense input {x.shape} incompatible with weights {weights.shape} / bias {bias.shape}")
    return add(matmul(x, weights), bias)


def dense_parameter_count(features: int, classes: int) -> int:
    return classes * (features + 1)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-softmax probability of the true class."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    b, k = logits.shape
    if labels.shape[0] != b:
        raise InputError(f"{labels.shape[0]} labels for a batch of {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise InputError(f"labels must lie in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(b), labels].mean()

    def bw(g):
        p = np.exp(logp)
        p[np.arange(b), labels] -= 1.0
        return (g * p / b,)

    return make_op((logits,), np.asarray(loss), bw)


# ---------------------------------------------------------------------------
# recurrent / attention


def lstm_parameter_count(input_dim: int, units: int) -> int:
    return 4 * units * (input_dim + units + 1)


def lstm_direction(
    seq: Tensor,
    kernel: Tensor,
    recurrent: Tensor,
    bias: Tensor,
    reverse: bool = False,
) -> Tensor:
    """One LSTM pass with zero initial state, returning every hidden state.

    ``kernel`` is (D, 4U), ``recurrent`` (U, 4U), ``bias`` (4U,), gates in
    the order input, forget, cell, output.  With ``reverse`` the sequence is
    consumed back to front and the outputs are re-reversed so that row t of
    the result still corresponds to input step t.
    """
    seq, squeeze = _batched(as_tensor(seq), 2)
    n, steps, d = seq.shape
    if steps == 0:
        raise InputError("LSTM over an empty sequence")
    u = recurrent.shape[0]
    if kernel.shape != (d, 4 * u) or recurrent.shape != (u, 4 * u) or bias.shape != (4 * u,):
        raise DimensionError(
            f"LSTM weights {kernel.shape}/{recurrent.shape}/{bias.shape} do not fit input dim {d}, {u} units"
        )
    W, R, b = kernel.data, recurrent.data, bias.data
    xs = seq.data[:, ::-1] if reverse else seq.data

    hs = np.zeros((steps + 1, n, u))
    cs = np.zeros((steps + 1, n, u))
    gates = np.empty((steps, n, 4 * u))
    xw = xs @ W + b  # (N, T, 4U)
    for t in range(steps):
        z = xw[:, t] + hs[t] @ R
        a = gates[t]
        a[:, : 2 * u] = _sigmoid(z[:, : 2 * u])
        a[:, 2 * u : 3 * u] = np.tanh(z[:, 2 * u : 3 * u])
        a[:, 3 * u :] = _sigmoid(z[:, 3 * u :])
        i, f, gc = a[:, :u], a[:, u : 2 * u], a[:, 2 * u : 3 * u]
        cs[t + 1] = f * cs[t] + i * gc
        hs[t + 1] = a[:, 3 * u :] * np.tanh(cs[t + 1])
    out = hs[1:].transpose(1, 0, 2)
    if reverse:
        out = out[:, ::-1]
    out = np.ascontiguousarray(out)

    def bw(g):
        gh_seq = g[:, ::-1] if reverse else g
        dz_all = np.empty((steps, n, 4 * u))
        dh_next = np.zeros((n, u))
        dc_next = np.zeros((n, u))
        for t in range(steps - 1, -1, -1):
            a = gates[t]
            i, f, gc, o = a[:, :u], a[:, u : 2 * u], a[:, 2 * u : 3 * u], a[:, 3 * u :]
            tc = np.tanh(cs[t + 1])
            dh = gh_seq[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[t]
            dz[:, :u] = dc * gc * i * (1.0 - i)
            dz[:, u : 2 * u] = dc * cs[t] * f * (1.0 - f)
            dz[:, 2 * u : 3 * u] = dc * i * (1.0 - gc * gc)
            dz[:, 3 * u :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ R.T
        dz_flat = dz_all.reshape(-1, 4 * u)
        gW = xs.transpose(1, 0, 2).reshape(-1, d).T @ dz_flat
        gR = hs[:-1].reshape(-1, u).T @ dz_flat
        gb = dz_flat.sum(axis=0)
        gx = (dz_all @ W.T).transpose(1, 0, 2)
        if reverse:
            gx = gx[:, ::-1]
        return np.ascontiguousarray(gx), gW, gR, gb

    return _unbatch(make_op((seq, kernel, recurrent, bias), out, bw), squeeze)


def bilstm(seq: Tensor, forward_params, backward_params) -> Tensor:
    """Concatenate forward and backward hidden states per time step.

    Each params argument is a ``(kernel, recurrent, bias)`` triple.
    """
    h_fwd = lstm_direction(seq, *forward_params, reverse=False)
    h_bwd = lstm_direction(seq, *backward_params, reverse=True)
    return concat([h_fwd, h_bwd], axis=-1)


def attention_parameter_count(features: int) -> int:
    return features * features + 2 * features


def additive_attention(seq: Tensor, weight: Tensor, bias: Tensor, context: Tensor) -> tuple[Tensor, Tensor]:
    """Score each step with ``context . tanh(W h_t + b)`` and reweight the sequence.

    Returns ``(weighted_sequence, alpha)`` where ``alpha`` sums to one over time.
    """
    seq, squeeze = _batched(as_tensor(seq), 2)
    n, steps, f = seq.shape
    hidden = tanh(add(matmul(seq, weight), bias))
    scores = reshape(matmul(hidden, reshape(context, (f, 1))), (n, steps))
    alpha = softmax(scores, axis=-1)
    out = mul(seq, reshape(alpha, (n, steps, 1)))
    return _unbatch(out, squeeze), _unbatch(alpha, squeeze)


def global_avg_pool_1d(seq: Tensor) -> Tensor:
    seq = as_tensor(seq)
    if seq.ndim < 2 or seq.shape[-2] < 1:
        raise DimensionError(f"expected a (T, F) sequence, got {seq.shape}")
    return seq.mean(axis=seq.ndim - 2)
