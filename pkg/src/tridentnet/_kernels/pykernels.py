"""NumPy implementations of the hot kernels.

This is the fallback backend used when the compiled extension is not built.
Both backends implement the same functions with identical signatures and
identical pixel-level semantics; see cykernels.pyx for the compiled twin.

Conventions shared by the image kernels: output pixel (r, c) has its center
at ego coordinates x = (h//2 - r) * res (forward), y = (w//2 - c) * res
(left). Nearest-pixel rounding is floor(v + 0.5) everywhere so that the two
backends agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def conv2d_fwd(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Valid-padding correlation. x: (N,C,H,W), w: (K,C,kh,kw) -> (N,K,Ho,Wo)."""
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    ho = (h - kh) // stride + 1
    wo = (wd - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :][:, :, :ho, :wo]
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N,Ho,Wo,K)
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d_bwd_w(x: np.ndarray, dy: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Gradient w.r.t. the kernel. dy: (N,K,Ho,Wo) -> (K,C,kh,kw).

    The kernel size cannot be inferred from the shapes (the window sweep may
    leave an unused margin), so it is explicit.
    """
    n, c, h, wd = x.shape
    _, k, ho, wo = dy.shape
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :][:, :, :ho, :wo]
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))  # (K,C,kh,kw)
    return np.ascontiguousarray(dw)


def conv2d_bwd_x(w: np.ndarray, dy: np.ndarray, h: int, wd: int, stride: int) -> np.ndarray:
    """Gradient w.r.t. the input, shape (N,C,h,wd)."""
    k, c, kh, kw = w.shape
    n, _, ho, wo = dy.shape
    dx = np.zeros((n, c, h, wd), dtype=np.float64)
    for di in range(kh):
        for dj in range(kw):
            contrib = np.tensordot(dy, w[:, :, di, dj], axes=([1], [0]))  # (N,Ho,Wo,C)
            dx[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += (
                contrib.transpose(0, 3, 1, 2)
            )
    return dx


def mark_polyline(grid: np.ndarray, res: float, pts: np.ndarray, radius: float) -> None:
    """Set grid pixels whose center lies within radius of the polyline.

    grid: (H, W) uint8, modified in place. pts: (M, 2) ego-frame meters.
    A single point stamps a disk; out-of-bounds geometry is clipped.
    """
    h, w = grid.shape
    cr = h // 2
    cc = w // 2
    m = len(pts)
    if m == 0:
        return
    segs = [(pts[0], pts[0])] if m == 1 else [(pts[i], pts[i + 1]) for i in range(m - 1)]
    r2 = radius * radius
    for p0, p1 in segs:
        ax, ay = float(p0[0]), float(p0[1])
        bx, by = float(p1[0]), float(p1[1])
        # inflated pixel bounding box of the segment
        xmin = min(ax, bx) - radius
        xmax = max(ax, bx) + radius
        ymin = min(ay, by) - radius
        ymax = max(ay, by) + radius
        r0 = max(0, int(np.floor(cr - xmax / res)))
        r1 = min(h - 1, int(np.ceil(cr - xmin / res)))
        c0 = max(0, int(np.floor(cc - ymax / res)))
        c1 = min(w - 1, int(np.ceil(cc - ymin / res)))
        if r0 > r1 or c0 > c1:
            continue
        rows = np.arange(r0, r1 + 1)
        cols = np.arange(c0, c1 + 1)
        px = (cr - rows).astype(np.float64) * res  # (R,)
        py = (cc - cols).astype(np.float64) * res  # (C,)
        dxs = bx - ax
        dys = by - ay
        den = dxs * dxs + dys * dys
        relx = px[:, None] - ax
        rely = py[None, :] - ay
        if den > 0.0:
            t = (relx * dxs + rely * dys) / den
            t = np.minimum(1.0, np.maximum(0.0, t))
        else:
            t = np.zeros((len(rows), len(cols)))
        ex = relx - t * dxs
        ey = rely - t * dys
        hit = ex * ex + ey * ey <= r2
        sub = grid[r0:r1 + 1, c0:c1 + 1]
        sub[hit] = 1


def sample_nearest(
    class_grid: np.ndarray,
    origin_x: float,
    origin_y: float,
    map_res: float,
    pose_x: float,
    pose_y: float,
    cos_yaw: float,
    sin_yaw: float,
    out_h: int,
    out_w: int,
    out_res: float,
    fill: int,
) -> np.ndarray:
    """Nearest-neighbor resample of a map-frame class grid into the ego frame.

    Map pixel (r, c) covers map position (origin_x + c*map_res,
    origin_y + r*map_res). Samples falling outside the grid get `fill`.
    The caller supplies cos/sin of the pose yaw so both backends share the
    exact same rotation constants.
    """
    mh, mw = class_grid.shape
    cr = out_h // 2
    cc = out_w // 2
    rows = np.arange(out_h)
    cols = np.arange(out_w)
    ex = (cr - rows).astype(np.float64) * out_res  # forward, per row
    ey = (cc - cols).astype(np.float64) * out_res  # left, per col
    mx = cos_yaw * ex[:, None] - sin_yaw * ey[None, :] + pose_x
    my = sin_yaw * ex[:, None] + cos_yaw * ey[None, :] + pose_y
    ci = np.floor((mx - origin_x) / map_res + 0.5)
    ri = np.floor((my - origin_y) / map_res + 0.5)
    inside = (ri >= 0) & (ri < mh) & (ci >= 0) & (ci < mw)
    out = np.full((out_h, out_w), fill, dtype=np.int32)
    riv = ri[inside].astype(np.int64)
    civ = ci[inside].astype(np.int64)
    out[inside] = class_grid[riv, civ]
    return out
