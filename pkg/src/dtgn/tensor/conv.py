"""Spatial primitives on NCHW tensors: convolution, transposed convolution,
max-pooling and nearest-neighbour upsampling.

Convolutions are lowered to a single matrix product over an im2col view; the
inverse scatter (col2im) loops over kernel offsets only.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ShapeMismatchError
from .core import Tensor, _result, note_branch


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _windows(xp: np.ndarray, kh, kw, sh, sw, ho, wo) -> np.ndarray:
    """(N, C, Hp, Wp) -> strided view (C, kh, kw, N, ho, wo)."""
    sn, sc, sy, sx = xp.strides
    n, c = xp.shape[:2]
    return as_strided(xp, shape=(c, kh, kw, n, ho, wo), strides=(sc, sy, sx, sn, sy * sh, sx * sw), writeable=False)


def _col2im(cols: np.ndarray, shape, kh, kw, sh, sw, ho, wo) -> np.ndarray:
    """Scatter-add (C, kh, kw, N, ho, wo) columns into an (N, C, Hp, Wp) array."""
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += cols[:, i, j].transpose(1, 0, 2, 3)
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``weight`` (O, C, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(f"conv2d: input {x.shape} incompatible with weight {weight.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeMismatchError(f"conv2d: kernel {weight.shape[2:]} larger than padded input {x.shape[2:]}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    cols = _windows(xp, kh, kw, sh, sw, ho, wo).reshape(c * kh * kw, n * ho * wo)
    wmat = weight.data.reshape(o, -1)
    out = (wmat @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
    out = np.ascontiguousarray(out)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (gmat @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (wmat.T @ gmat).reshape(c, kh, kw, n, ho, wo)
            gxp = _col2im(gcols, xp.shape, kh, kw, sh, sw, ho, wo)
            gx = gxp[:, :, ph:ph + h, pw:pw + w] if ph or pw else gxp
        if bias is None:
            return gx, gw
        return gx, gw, gmat.sum(axis=1)

    return _result(out, parents, back)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Transposed convolution; ``weight`` is (C_in, C_out, kh, kw).

    Output extent is ``(H - 1) * stride - 2 * padding + kh``.
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatchError(f"conv_transpose2d: input {x.shape} incompatible with weight {weight.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    n, c, h, w = x.shape
    _, o, kh, kw = weight.shape
    hf = (h - 1) * sh + kh
    wf = (w - 1) * sw + kw
    ho, wo = hf - 2 * ph, wf - 2 * pw
    if ho <= 0 or wo <= 0:
        raise ShapeMismatchError(f"conv_transpose2d: padding {padding} too large for output {hf}x{wf}")
    xmat = x.data.transpose(1, 0, 2, 3).reshape(c, -1)
    wmat = weight.data.reshape(c, -1)
    cols = (wmat.T @ xmat).reshape(o, kh, kw, n, h, w)
    full = _col2im(cols, (n, o, hf, wf), kh, kw, sh, sw, h, w)
    out = full[:, :, ph:ph + ho, pw:pw + wo]
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
    out = np.ascontiguousarray(out)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gfull = np.pad(g, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else g
        gcols = _windows(np.ascontiguousarray(gfull), kh, kw, sh, sw, h, w).reshape(o * kh * kw, n * h * w)
        gx = (wmat @ gcols).reshape(c, n, h, w).transpose(1, 0, 2, 3) if x.requires_grad else None
        gw = (xmat @ gcols.T).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _result(out, parents, back)


def maxpool2d(x: Tensor, kernel=2) -> Tensor:
    """Non-overlapping max pooling (stride equals kernel). Ties pick the first max."""
    kh, kw = _pair(kernel)
    n, c, h, w = x.shape
    if h % kh or w % kw:
        raise ShapeMismatchError(f"maxpool2d: extent {(h, w)} not divisible by kernel {(kh, kw)}")
    ho, wo = h // kh, w // kw
    blocks = x.data.reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, kh * kw)
    arg = blocks.argmax(axis=-1)
    note_branch(arg)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def back(g):
        mask = np.arange(kh * kw) == arg[..., None]
        gb = mask * g[..., None]
        return (gb.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return _result(np.ascontiguousarray(out), (x,), back)


def upsample_nearest2d(x: Tensor, scale=2) -> Tensor:
    sh, sw = _pair(scale)
    n, c, h, w = x.shape
    out = np.broadcast_to(x.data[:, :, :, None, :, None], (n, c, h, sh, w, sw)).reshape(n, c, h * sh, w * sw)

    def back(g):
        return (g.reshape(n, c, h, sh, w, sw).sum(axis=(3, 5)),)

    return _result(np.ascontiguousarray(out), (x,), back)
