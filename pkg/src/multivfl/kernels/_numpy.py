"""Pure-numpy patch extraction kernels (reference path).

Images are channels-last (B, H, W, C); a patch row is laid out (i, j, c).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k, stride, pad, ho, wo):
    """Unfold (B, H, W, C) into (B*ho*wo, k*k*C) zero-padded patch rows."""
    b, _, _, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (B, H', W', C, k, k)
    win = win[:, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(b * ho * wo, k * k * c)


def col2im(dcols, x_shape, k, stride, pad, ho, wo, out=None):
    """Adjoint of :func:`im2col`: scatter-add patch rows back onto the image.

    Accumulates kernel offset by kernel offset, row-major in (i, j); the numba
    kernel follows the same order so both paths agree bitwise.
    """
    b, h, w, c = x_shape
    d = dcols.reshape(b, ho, wo, k, k, c)
    acc = np.zeros((b, h + 2 * pad, w + 2 * pad, c))
    hs = stride * (ho - 1) + 1
    ws = stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            acc[:, i : i + hs : stride, j : j + ws : stride] += d[:, :, :, i, j]
    acc = acc[:, pad : pad + h, pad : pad + w] if pad else acc
    if out is None:
        return acc
    out[...] = acc
    return out


def relu_grad(dy, y):
    """``dy`` masked to where the relu output ``y`` is positive."""
    return dy * (y > 0)
