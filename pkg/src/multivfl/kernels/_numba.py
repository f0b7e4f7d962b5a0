"""numba-compiled patch extraction kernels (channels-last, implicit padding)."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def im2col(x, k, stride, pad, ho, wo):
    b, h, w, c = x.shape
    cols = np.zeros((b * ho * wo, k * k * c))
    for n in range(b):
        for oh in range(ho):
            for ow in range(wo):
                row = (n * ho + oh) * wo + ow
                for i in range(k):
                    y = oh * stride + i - pad
                    if y < 0 or y >= h:
                        continue
                    for j in range(k):
                        xx = ow * stride + j - pad
                        if xx < 0 or xx >= w:
                            continue
                        base = (i * k + j) * c
                        for ch in range(c):
                            cols[row, base + ch] = x[n, y, xx, ch]
    return cols


@njit(cache=True, nogil=True)
def _col2im(dcols, out, k, stride, pad, ho, wo):
    b, h, w, c = out.shape
    out[...] = 0.0
    # (i, j) outermost: same accumulation order as the numpy path
    for i in range(k):
        for j in range(k):
            base = (i * k + j) * c
            for n in range(b):
                for oh in range(ho):
                    y = oh * stride + i - pad
                    if y < 0 or y >= h:
                        continue
                    for ow in range(wo):
                        xx = ow * stride + j - pad
                        if xx < 0 or xx >= w:
                            continue
                        row = (n * ho + oh) * wo + ow
                        for ch in range(c):
                            out[n, y, xx, ch] += dcols[row, base + ch]


def col2im(dcols, x_shape, k, stride, pad, ho, wo, out=None):
    if out is None:
        out = np.empty(x_shape)
    _col2im(np.ascontiguousarray(dcols), out, k, stride, pad, ho, wo)
    return out


@njit(cache=True, nogil=True)
def _relu_grad4(dy, y):
    out = np.empty(dy.shape)
    a, b, c, d = dy.shape
    for n in range(a):
        for p in range(b):
            for q in range(c):
                for ch in range(d):
                    # multiply rather than select so signed zeros match the numpy path
                    out[n, p, q, ch] = dy[n, p, q, ch] * (1.0 if y[n, p, q, ch] > 0 else 0.0)
    return out


def relu_grad(dy, y):
    if dy.ndim == 4:
        return _relu_grad4(dy, y)
    return dy * (y > 0)
