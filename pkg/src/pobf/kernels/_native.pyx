# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot kernels.

Mirror of ``_fallback.py``; expression order must stay identical between the
two backends so results are bit-for-bit equal.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "native"


cpdef double iou_cwh(double acx, double acy, double aw, double ah,
                     double bcx, double bcy, double bw, double bh):
    """IoU of two center/width/height boxes. Edge-touching boxes score 0."""
    cdef double ax0 = acx - aw / 2.0
    cdef double ay0 = acy - ah / 2.0
    cdef double ax1 = acx + aw / 2.0
    cdef double ay1 = acy + ah / 2.0
    cdef double bx0 = bcx - bw / 2.0
    cdef double by0 = bcy - bh / 2.0
    cdef double bx1 = bcx + bw / 2.0
    cdef double by1 = bcy + bh / 2.0
    cdef double iw = min(ax1, bx1) - max(ax0, bx0)
    cdef double ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    cdef double inter = iw * ih
    cdef double union_ = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union_


def iou_pairs(a, b):
    """Row-wise IoU of two (n, 4) float64 arrays of cwh boxes."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(n):
        ov[i] = iou_cwh(av[i, 0], av[i, 1], av[i, 2], av[i, 3],
                        bv[i, 0], bv[i, 1], bv[i, 2], bv[i, 3])
    return out


def fill_outside(cnp.uint8_t[:, ::1] mask, Py_ssize_t ix0, Py_ssize_t iy0,
                 Py_ssize_t ix1, Py_ssize_t iy1):
    """Write 1 everywhere except the [iy0,iy1) x [ix0,ix1) rectangle."""
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef Py_ssize_t x, y
    for y in range(h):
        for x in range(w):
            if iy0 <= y < iy1 and ix0 <= x < ix1:
                mask[y, x] = 0
            else:
                mask[y, x] = 1


def zero_rect(cnp.uint8_t[:, :, ::1] img, Py_ssize_t ix0, Py_ssize_t iy0,
              Py_ssize_t ix1, Py_ssize_t iy1):
    """Zero all channels inside the pixel rectangle, in place."""
    cdef Py_ssize_t c = img.shape[2]
    cdef Py_ssize_t x, y, k
    for y in range(iy0, iy1):
        for x in range(ix0, ix1):
            for k in range(c):
                img[y, x, k] = 0


def restore_where_keep(cnp.uint8_t[:, :, ::1] out, const cnp.uint8_t[:, :, ::1] src,
                       const cnp.uint8_t[:, ::1] mask):
    """Overwrite ``out`` with ``src`` wherever ``mask`` is 0.

    Returns how many kept pixels actually differed, so callers can log
    backends that failed to preserve the masked-out region.
    """
    cdef Py_ssize_t h = out.shape[0]
    cdef Py_ssize_t w = out.shape[1]
    cdef Py_ssize_t c = out.shape[2]
    cdef Py_ssize_t x, y, k
    cdef long differed = 0
    cdef bint diff
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                diff = False
                for k in range(c):
                    if out[y, x, k] != src[y, x, k]:
                        diff = True
                    out[y, x, k] = src[y, x, k]
                if diff:
                    differed += 1
    return differed
