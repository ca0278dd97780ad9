"""Convolutions, attention, normalisation and spectral ops on :class:`Tensor`."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..signal import StftConfig, frame_indices
from .tensor import Tensor, _make, as_tensor, matmul, mean, softmax, sqrt, transpose


def _pads(padding, kernel: int, dilation: int):
    if padding == "same":
        total = dilation * (kernel - 1)
        return total // 2, total - total // 2
    if isinstance(padding, (tuple, list)):
        return int(padding[0]), int(padding[1])
    return int(padding), int(padding)


def conv_output_length(length: int, kernel: int, stride: int = 1, dilation: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           dilation: int = 1, padding=0) -> Tensor:
    """Cross-correlation over the last axis.

    ``x`` is (C_in, T) or (B, C_in, T); ``weight`` is (C_out, C_in, K).
    ``padding`` may be an int, a (left, right) pair or ``"same"`` (stride 1).
    """
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    w = weight.data
    if xd.ndim != 3 or w.ndim != 3 or xd.shape[1] != w.shape[1]:
        raise ContractError(f"conv1d shape mismatch: input {x.shape}, weight {weight.shape}")
    if padding == "same" and stride != 1:
        raise ContractError("'same' padding is only defined for stride 1")
    c_out, _, k = w.shape
    pl, pr = _pads(padding, k, dilation)
    xp = np.pad(xd, ((0, 0), (0, 0), (pl, pr))) if pl or pr else xd
    span = dilation * (k - 1) + 1
    t_out = (xp.shape[-1] - span) // stride + 1
    if t_out < 1:
        raise ContractError(f"conv1d input of length {x.shape[-1]} too short for span {span}")
    last = stride * (t_out - 1) + 1
    wt = np.ascontiguousarray(w.transpose(2, 0, 1))  # per-tap matrices keep matmul on BLAS
    taps = [np.ascontiguousarray(xp[:, :, j * dilation:j * dilation + last:stride]) for j in range(k)]
    out = np.zeros((xd.shape[0], c_out, t_out), dtype=xd.dtype)
    for j in range(k):
        out += np.matmul(wt[j], taps[j])
    if bias is not None:
        out += bias.data[None, :, None]
    if squeeze:
        out = out[0]
    t_in = xd.shape[-1]

    def backward(g):
        g3 = g[None] if squeeze else g
        gx = gw = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                a = j * dilation
                gxp[:, :, a:a + last:stride] += np.matmul(wt[j].T, g3)
            gx = gxp[:, :, pl:pl + t_in]
            gx = gx[0] if squeeze else gx
        if weight.requires_grad:
            gflat = np.ascontiguousarray(g3.transpose(1, 0, 2)).reshape(c_out, -1)
            gw = np.stack([gflat @ taps[j].transpose(0, 2, 1).reshape(-1, taps[j].shape[1])
                           for j in range(k)], axis=-1)
        if bias is not None and bias.requires_grad:
            gb = g3.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, lambda g: backward(g)[: len(parents)], "conv1d")


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Transposed convolution; ``weight`` is (C_in, C_out, K).

    Output length is ``(T - 1) * stride - 2 * padding + K``.
    """
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    w = weight.data
    if xd.ndim != 3 or w.ndim != 3 or xd.shape[1] != w.shape[0]:
        raise ContractError(f"conv_transpose1d shape mismatch: input {x.shape}, weight {weight.shape}")
    _, c_out, k = w.shape
    t_in = xd.shape[-1]
    full_len = (t_in - 1) * stride + k
    out_len = full_len - 2 * padding
    if out_len < 1:
        raise ContractError("conv_transpose1d output would be empty")
    last = stride * (t_in - 1) + 1
    wt = np.ascontiguousarray(w.transpose(2, 1, 0))  # (K, C_out, C_in)
    full = np.zeros((xd.shape[0], c_out, full_len), dtype=xd.dtype)
    for j in range(k):
        full[:, :, j:j + last:stride] += np.matmul(wt[j], xd)
    out = full[:, :, padding:padding + out_len]
    if bias is not None:
        out = out + bias.data[None, :, None]
    else:
        out = out.copy()
    if squeeze:
        out = out[0]

    def backward(g):
        g3 = g[None] if squeeze else g
        gfull = np.zeros((g3.shape[0], c_out, full_len), dtype=g3.dtype)
        gfull[:, :, padding:padding + out_len] = g3
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.zeros_like(xd)
            for j in range(k):
                gx += np.matmul(wt[j].T, np.ascontiguousarray(gfull[:, :, j:j + last:stride]))
            gx = gx[0] if squeeze else gx
        if weight.requires_grad:
            xflat = np.ascontiguousarray(xd.transpose(1, 0, 2)).reshape(xd.shape[1], -1)
            gw = np.stack([xflat @ np.ascontiguousarray(gfull[:, :, j:j + last:stride].transpose(0, 2, 1))
                           .reshape(-1, c_out) for j in range(k)], axis=-1)
        if bias is not None and bias.requires_grad:
            gb = g3.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, lambda g: backward(g)[: len(parents)], "conv_transpose1d")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = mean(x, axis=-1, keepdims=True)
    centred = x - mu
    var = mean(centred * centred, axis=-1, keepdims=True)
    return centred / sqrt(var + eps) * gamma + beta


def attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int) -> Tensor:
    """Full (unmasked) multi-head scaled dot-product attention.

    ``q``, ``k``, ``v`` are (T, d) already projected; heads are split along
    ``d`` and concatenated back, so the result is (T, d).
    """
    t_q, d = q.shape
    if k.shape[-1] != d or v.shape[-1] != d or k.shape[0] != v.shape[0]:
        raise ContractError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    if d % n_heads:
        raise ContractError(f"model dim {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    qh = transpose(q.reshape(t_q, n_heads, dh), (1, 0, 2))
    kh = transpose(k.reshape(k.shape[0], n_heads, dh), (1, 2, 0))
    vh = transpose(v.reshape(v.shape[0], n_heads, dh), (1, 0, 2))
    weights = softmax(matmul(qh, kh) * (1.0 / np.sqrt(dh)), axis=-1)
    out = matmul(weights, vh)
    return transpose(out, (1, 0, 2)).reshape(t_q, d)


def stft_magnitude(x: Tensor, cfg: StftConfig | None = None, eps: float = 1e-9) -> Tensor:
    """Magnitude of the centred Hann STFT (frames x bins) of a 1-D or (B, T) signal."""
    cfg = cfg or StftConfig()
    squeeze = x.ndim == 1
    xd = x.data[None] if squeeze else x.data
    n = xd.shape[-1]
    idx = frame_indices(n, cfg)
    win = cfg.window.astype(xd.dtype)
    spec = np.fft.rfft(xd[:, idx] * win, axis=-1)
    mag = np.sqrt(spec.real ** 2 + spec.imag ** 2 + eps).astype(xd.dtype)
    half = np.full(spec.shape[-1], 0.5)
    half[0] = half[-1] = 1.0

    def backward(g):
        g3 = g[None] if squeeze else g
        h = g3 * spec / mag * half
        gframes = np.fft.irfft(h, cfg.n_fft, axis=-1) * cfg.n_fft * win
        flat = idx.ravel()
        gx = np.stack([np.bincount(flat, weights=gf.ravel(), minlength=n) for gf in gframes])
        gx = gx.astype(xd.dtype)
        return (gx[0] if squeeze else gx,)

    return _make(mag[0] if squeeze else mag, (x,), backward, "stft_magnitude")


def haar_split(x: Tensor) -> Tensor:
    """One Haar level on every channel of (..., C, T): returns (..., 2C, T/2).

    Output channels interleave as [a_0, d_0, a_1, d_1, ...].
    """
    xd = x.data
    if xd.shape[-1] % 2:
        raise ContractError("haar_split needs an even length")
    even, odd = xd[..., 0::2], xd[..., 1::2]
    r2 = np.sqrt(2.0)
    out = np.stack([(even + odd) / r2, (even - odd) / r2], axis=-2)
    out = out.reshape(xd.shape[:-2] + (2 * xd.shape[-2], xd.shape[-1] // 2))

    def backward(g):
        g4 = g.reshape(xd.shape[:-2] + (xd.shape[-2], 2, xd.shape[-1] // 2))
        ga, gd = g4[..., 0, :], g4[..., 1, :]
        gx = np.empty_like(xd)
        gx[..., 0::2] = (ga + gd) / r2
        gx[..., 1::2] = (ga - gd) / r2
        return (gx,)

    return _make(out.astype(xd.dtype), (x,), backward, "haar_split")


def mse(pred: Tensor, target) -> Tensor:
    diff = pred - as_tensor(target, pred)
    return mean(diff * diff)
