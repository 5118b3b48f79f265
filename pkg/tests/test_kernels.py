"""Kernel backends must agree with naive oracles and with each other."""

import math

import numpy as np
import pytest

from tridentnet._kernels import pykernels, select_backend


def _naive_conv(x, w, stride):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    ho = (h - kh) // stride + 1
    wo = (wd - kw) // stride + 1
    y = np.zeros((n, k, ho, wo))
    for ni in range(n):
        for ki in range(k):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += x[ni, ci, i * stride + di, j * stride + dj] * w[ki, ci, di, dj]
                    y[ni, ki, i, j] = acc
    return y


CONV_CASES = [(8, 8, 3, 2), (11, 13, 3, 3), (9, 9, 2, 2), (7, 10, 3, 1), (5, 5, 5, 1)]


@pytest.mark.parametrize("h,w,k,s", CONV_CASES)
def test_conv_fwd_matches_naive(backend, h, w, k, s):
    rng = np.random.default_rng(h * 100 + w)
    x = rng.standard_normal((2, 3, h, w))
    wk = rng.standard_normal((4, 3, k, k))
    got = backend.conv2d_fwd(x, wk, s)
    assert got == pytest.approx(_naive_conv(x, wk, s), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("h,w,k,s", CONV_CASES)
def test_conv_backward_matches_finite_differences(backend, h, w, k, s):
    rng = np.random.default_rng(h * 7 + s)
    x = rng.standard_normal((1, 2, h, w))
    wk = rng.standard_normal((3, 2, k, k))
    dy = rng.standard_normal(backend.conv2d_fwd(x, wk, s).shape)

    def loss(xx, ww):
        return float(np.sum(backend.conv2d_fwd(xx, ww, s) * dy))

    dw = backend.conv2d_bwd_w(x, dy, k, k, s)
    dx = backend.conv2d_bwd_x(wk, dy, h, w, s)
    eps = 1e-6
    for idx in [(0, 0, 0, 0), (2, 1, k - 1, k - 1), (1, 0, k // 2, 0)]:
        wp = wk.copy(); wp[idx] += eps
        wm = wk.copy(); wm[idx] -= eps
        num = (loss(x, wp) - loss(x, wm)) / (2 * eps)
        assert dw[idx] == pytest.approx(num, rel=1e-5, abs=1e-6)
    for idx in [(0, 0, 0, 0), (0, 1, h - 1, w - 1), (0, 0, h // 2, w // 3)]:
        xp = x.copy(); xp[idx] += eps
        xm = x.copy(); xm[idx] -= eps
        num = (loss(xp, wk) - loss(xm, wk)) / (2 * eps)
        assert dx[idx] == pytest.approx(num, rel=1e-5, abs=1e-6)


def _both_backends():
    try:
        return pykernels, select_backend("cython")
    except ImportError:
        pytest.skip("compiled kernels not built")


def test_conv_cross_backend_parity():
    py, cy = _both_backends()
    rng = np.random.default_rng(0)
    for h, w, k, s in CONV_CASES:
        x = rng.standard_normal((2, 3, h, w))
        wk = rng.standard_normal((4, 3, k, k))
        a = py.conv2d_fwd(x, wk, s)
        b = cy.conv2d_fwd(x, wk, s)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-13)
        dy = rng.standard_normal(a.shape)
        assert py.conv2d_bwd_w(x, dy, k, k, s) == pytest.approx(
            cy.conv2d_bwd_w(x, dy, k, k, s), rel=1e-12, abs=1e-13)
        assert py.conv2d_bwd_x(wk, dy, h, w, s) == pytest.approx(
            cy.conv2d_bwd_x(wk, dy, h, w, s), rel=1e-12, abs=1e-13)


def test_mark_polyline_cross_backend_bit_exact():
    py, cy = _both_backends()
    rng = np.random.default_rng(1)
    for _ in range(25):
        pts = rng.uniform(-15, 15, (int(rng.integers(1, 6)), 2))
        radius = float(rng.uniform(0.1, 2.0))
        g1 = np.zeros((48, 52), dtype=np.uint8)
        g2 = np.zeros((48, 52), dtype=np.uint8)
        py.mark_polyline(g1, 0.5, pts, radius)
        cy.mark_polyline(g2, 0.5, pts, radius)
        assert np.array_equal(g1, g2)


def test_sample_nearest_cross_backend_bit_exact():
    py, cy = _both_backends()
    rng = np.random.default_rng(2)
    grid = rng.integers(0, 6, (120, 140)).astype(np.int32)
    for _ in range(25):
        x, y = rng.uniform(-10, 30, 2)
        yaw = float(rng.uniform(-math.pi, math.pi))
        args = (grid, -5.0, -7.0, 0.25, float(x), float(y),
                math.cos(yaw), math.sin(yaw), 64, 64, 0.2, 0)
        assert np.array_equal(py.sample_nearest(*args), cy.sample_nearest(*args))


def test_sample_nearest_matches_scalar_oracle(backend):
    rng = np.random.default_rng(3)
    grid = rng.integers(0, 6, (40, 50)).astype(np.int32)
    ox, oy, mres = -2.0, -3.0, 0.25
    px, py_, yaw = 1.5, 0.5, 0.9
    out = backend.sample_nearest(grid, ox, oy, mres, px, py_,
                                 math.cos(yaw), math.sin(yaw), 20, 22, 0.3, 0)
    cth, sth = math.cos(yaw), math.sin(yaw)
    for r in range(20):
        for c in range(22):
            ex = (10 - r) * 0.3
            ey = (11 - c) * 0.3
            mx = cth * ex - sth * ey + px
            my = sth * ex + cth * ey + py_
            ci = math.floor((mx - ox) / mres + 0.5)
            ri = math.floor((my - oy) / mres + 0.5)
            expect = grid[int(ri), int(ci)] if 0 <= ri < 40 and 0 <= ci < 50 else 0
            assert out[r, c] == expect
