# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors pykernels.py function for function. Convolutions run as im2col plus
BLAS dgemm; the geometric kernels are scalar loops using the exact same
floating-point expressions as the NumPy backend so that integer/boolean
outputs match it bit-for-bit (the build disables FP contraction for this
reason).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef inline void _gemm_rm(char ta, char tb, int m, int n, int k,
                          double alpha, double* a, int acols,
                          double* b, int bcols,
                          double beta, double* c) noexcept nogil:
    # Row-major C(m,n) = op(A)(m,k) @ op(B)(k,n), expressed as the
    # column-major product C^T = op(B)^T op(A)^T.
    dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &bcols, a, &acols, &beta, c, &n)


cdef void _im2col(const double[:, :, ::1] x, double[:, ::1] cols,
                  int kh, int kw, int stride, int ho, int wo) noexcept nogil:
    cdef int c, di, dj, i, j, row
    cdef int nc = x.shape[0]
    for c in range(nc):
        for di in range(kh):
            for dj in range(kw):
                row = (c * kh + di) * kw + dj
                for i in range(ho):
                    for j in range(wo):
                        cols[row, i * wo + j] = x[c, i * stride + di, j * stride + dj]


def conv2d_fwd(cnp.ndarray x_arr, cnp.ndarray w_arr, int stride):
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_arr, dtype=np.float64)
    cdef double[:, :, :, ::1] w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int k = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int ho = (h - kh) // stride + 1
    cdef int wo = (wd - kw) // stride + 1
    cdef int ckk = c * kh * kw
    y_arr = np.empty((n, k, ho, wo), dtype=np.float64)
    cols_arr = np.empty((ckk, ho * wo), dtype=np.float64)
    cdef double[:, :, :, ::1] y = y_arr
    cdef double[:, ::1] cols = cols_arr
    cdef int i
    with nogil:
        for i in range(n):
            _im2col(x[i], cols, kh, kw, stride, ho, wo)
            _gemm_rm(b'N', b'N', k, ho * wo, ckk, 1.0,
                     &w[0, 0, 0, 0], ckk, &cols[0, 0], ho * wo,
                     0.0, &y[i, 0, 0, 0])
    return y_arr


def conv2d_bwd_w(cnp.ndarray x_arr, cnp.ndarray dy_arr, int kh, int kw, int stride):
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_arr, dtype=np.float64)
    cdef double[:, :, :, ::1] dy = np.ascontiguousarray(dy_arr, dtype=np.float64)
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int k = dy.shape[1], ho = dy.shape[2], wo = dy.shape[3]
    cdef int ckk = c * kh * kw
    dw_arr = np.zeros((k, c, kh, kw), dtype=np.float64)
    cols_arr = np.empty((ckk, ho * wo), dtype=np.float64)
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[:, ::1] cols = cols_arr
    cdef int i
    with nogil:
        for i in range(n):
            _im2col(x[i], cols, kh, kw, stride, ho, wo)
            _gemm_rm(b'N', b'T', k, ckk, ho * wo, 1.0,
                     &dy[i, 0, 0, 0], ho * wo, &cols[0, 0], ho * wo,
                     1.0, &dw[0, 0, 0, 0])
    return dw_arr


def conv2d_bwd_x(cnp.ndarray w_arr, cnp.ndarray dy_arr, int h, int wd, int stride):
    cdef double[:, :, :, ::1] w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef double[:, :, :, ::1] dy = np.ascontiguousarray(dy_arr, dtype=np.float64)
    cdef int k = w.shape[0], c = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef int n = dy.shape[0], ho = dy.shape[2], wo = dy.shape[3]
    cdef int ckk = c * kh * kw
    dx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    dcols_arr = np.empty((ckk, ho * wo), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, ::1] dcols = dcols_arr
    cdef int i, cc, di, dj, oi, oj, row
    with nogil:
        for i in range(n):
            _gemm_rm(b'T', b'N', ckk, ho * wo, k, 1.0,
                     &w[0, 0, 0, 0], ckk, &dy[i, 0, 0, 0], ho * wo,
                     0.0, &dcols[0, 0])
            for cc in range(c):
                for di in range(kh):
                    for dj in range(kw):
                        row = (cc * kh + di) * kw + dj
                        for oi in range(ho):
                            for oj in range(wo):
                                dx[i, cc, oi * stride + di, oj * stride + dj] += \
                                    dcols[row, oi * wo + oj]
    return dx_arr


def mark_polyline(cnp.ndarray grid_arr, double res, cnp.ndarray pts_arr, double radius):
    cdef cnp.uint8_t[:, ::1] grid = grid_arr
    cdef double[:, ::1] pts = np.ascontiguousarray(pts_arr, dtype=np.float64)
    cdef int h = grid.shape[0], w = grid.shape[1]
    cdef int cr = h // 2, cc = w // 2
    cdef int m = pts.shape[0]
    if m == 0:
        return
    cdef int nseg = 1 if m == 1 else m - 1
    cdef double r2 = radius * radius
    cdef double ax, ay, bx, by, xmin, xmax, ymin, ymax
    cdef double fr0, fr1, fc0, fc1
    cdef double dxs, dys, den, px, py, relx, rely, t, ex, ey
    cdef int s, r0, r1, c0, c1, r, c
    for s in range(nseg):
        ax = pts[s, 0]
        ay = pts[s, 1]
        if m == 1:
            bx = ax
            by = ay
        else:
            bx = pts[s + 1, 0]
            by = pts[s + 1, 1]
        xmin = (ax if ax < bx else bx) - radius
        xmax = (ax if ax > bx else bx) + radius
        ymin = (ay if ay < by else by) - radius
        ymax = (ay if ay > by else by) + radius
        # clamp in double before the int cast; far-off segments would overflow
        fr0 = floor(cr - xmax / res)
        fr1 = ceil(cr - xmin / res)
        fc0 = floor(cc - ymax / res)
        fc1 = ceil(cc - ymin / res)
        if fr0 < 0: fr0 = 0
        if fr1 > h - 1: fr1 = h - 1
        if fc0 < 0: fc0 = 0
        if fc1 > w - 1: fc1 = w - 1
        if fr0 > fr1 or fc0 > fc1:
            continue
        r0 = <int>fr0
        r1 = <int>fr1
        c0 = <int>fc0
        c1 = <int>fc1
        dxs = bx - ax
        dys = by - ay
        den = dxs * dxs + dys * dys
        for r in range(r0, r1 + 1):
            px = <double>(cr - r) * res
            relx = px - ax
            for c in range(c0, c1 + 1):
                py = <double>(cc - c) * res
                rely = py - ay
                if den > 0.0:
                    t = (relx * dxs + rely * dys) / den
                    if t < 0.0: t = 0.0
                    if t > 1.0: t = 1.0
                else:
                    t = 0.0
                ex = relx - t * dxs
                ey = rely - t * dys
                if ex * ex + ey * ey <= r2:
                    grid[r, c] = 1


def sample_nearest(cnp.ndarray class_grid_arr, double origin_x, double origin_y,
                   double map_res, double pose_x, double pose_y,
                   double cos_yaw, double sin_yaw,
                   int out_h, int out_w, double out_res, int fill):
    cdef cnp.int32_t[:, ::1] cg = np.ascontiguousarray(class_grid_arr, dtype=np.int32)
    cdef int mh = cg.shape[0], mw = cg.shape[1]
    cdef int cr = out_h // 2, cc = out_w // 2
    out_arr = np.empty((out_h, out_w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] out = out_arr
    cdef int r, c
    cdef double ex, ey, mx, my, ri, ci
    with nogil:
        for r in range(out_h):
            ex = <double>(cr - r) * out_res
            for c in range(out_w):
                ey = <double>(cc - c) * out_res
                mx = cos_yaw * ex - sin_yaw * ey + pose_x
                my = sin_yaw * ex + cos_yaw * ey + pose_y
                ci = floor((mx - origin_x) / map_res + 0.5)
                ri = floor((my - origin_y) / map_res + 0.5)
                if ri >= 0 and ri < mh and ci >= 0 and ci < mw:
                    out[r, c] = cg[<int>ri, <int>ci]
                else:
                    out[r, c] = fill
    return out_arr
