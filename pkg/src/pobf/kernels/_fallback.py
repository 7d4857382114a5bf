"""Numpy/pure-python implementation of the hot kernels.

Mirror of ``_native.pyx``. Both backends must produce bit-identical results:
every expression here is written in the same order as its compiled twin so
IEEE-754 rounding agrees exactly.
"""

import numpy as np

BACKEND = "python"


def iou_cwh(acx, acy, aw, ah, bcx, bcy, bw, bh):
    """IoU of two center/width/height boxes. Edge-touching boxes score 0."""
    ax0 = acx - aw / 2.0
    ay0 = acy - ah / 2.0
    ax1 = acx + aw / 2.0
    ay1 = acy + ah / 2.0
    bx0 = bcx - bw / 2.0
    by0 = bcy - bh / 2.0
    bx1 = bcx + bw / 2.0
    by1 = bcy + bh / 2.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def iou_pairs(a, b):
    """Row-wise IoU of two (n, 4) float64 arrays of cwh boxes."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    ax0 = a[:, 0] - a[:, 2] / 2.0
    ay0 = a[:, 1] - a[:, 3] / 2.0
    ax1 = a[:, 0] + a[:, 2] / 2.0
    ay1 = a[:, 1] + a[:, 3] / 2.0
    bx0 = b[:, 0] - b[:, 2] / 2.0
    by0 = b[:, 1] - b[:, 3] / 2.0
    bx1 = b[:, 0] + b[:, 2] / 2.0
    by1 = b[:, 1] + b[:, 3] / 2.0
    iw = np.minimum(ax1, bx1) - np.maximum(ax0, bx0)
    ih = np.minimum(ay1, by1) - np.maximum(ay0, by0)
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    out = inter / union
    out[(iw <= 0.0) | (ih <= 0.0)] = 0.0
    return out


def fill_outside(mask, ix0, iy0, ix1, iy1):
    """Write 1 everywhere except the [iy0,iy1) x [ix0,ix1) rectangle."""
    mask[...] = 1
    mask[iy0:iy1, ix0:ix1] = 0


def zero_rect(img, ix0, iy0, ix1, iy1):
    """Zero all channels inside the pixel rectangle, in place."""
    img[iy0:iy1, ix0:ix1, :] = 0


def restore_where_keep(out, src, mask):
    """Overwrite ``out`` with ``src`` wherever ``mask`` is 0.

    Returns how many kept pixels actually differed, so callers can log
    backends that failed to preserve the masked-out region.
    """
    keep = mask == 0
    differed = int((keep & (out != src).any(axis=2)).sum())
    out[keep] = src[keep]
    return differed
