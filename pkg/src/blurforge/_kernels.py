"""Compiled inner loops for whole-frame warping and per-pixel trajectory fits.

Each kernel repeats the arithmetic of its numpy counterpart operation for
operation (``warp.sample_bilinear``, ``camera_geom.rotation_map``,
``bezier_encode.fit_cubic_bezier_batch``) so both paths agree to rounding.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def warp_bilinear(img, minv, out, valid):
    """Inverse-map every output pixel through ``minv`` and sample ``img`` bilinearly.

    Returns the number of output pixels whose source lies at infinity.
    """
    h, w, nc = img.shape
    tol = 1e-9
    at_infinity = 0
    for y in range(h):
        fy_ = float(y)
        for x in range(w):
            fx_ = float(x)
            wz = minv[2, 0] * fx_ + minv[2, 1] * fy_ + minv[2, 2]
            if abs(wz) <= 1e-12:
                at_infinity += 1
                continue
            xs = (minv[0, 0] * fx_ + minv[0, 1] * fy_ + minv[0, 2]) / wz
            ys = (minv[1, 0] * fx_ + minv[1, 1] * fy_ + minv[1, 2]) / wz
            valid[y, x] = xs >= -tol and xs <= w - 1 + tol and ys >= -tol and ys <= h - 1 + tol
            xc = min(max(xs, 0.0), w - 1.0)
            yc = min(max(ys, 0.0), h - 1.0)
            if w == 1:
                x0 = 0
                x1 = 0
                wx = 0.0
            else:
                x0 = min(int(math.floor(xc)), w - 2)
                x1 = x0 + 1
                wx = xc - x0
            if h == 1:
                y0 = 0
                y1 = 0
                wy = 0.0
            else:
                y0 = min(int(math.floor(yc)), h - 2)
                y1 = y0 + 1
                wy = yc - y0
            for ch in range(nc):
                a = img[y0, x0, ch]
                b = img[y0, x1, ch]
                c = img[y1, x0, ch]
                d = img[y1, x1, ch]
                top = a + wx * (b - a)
                bot = c + wx * (d - c)
                out[y, x, ch] = top + wy * (bot - top)
    return at_infinity


@njit(cache=True, nogil=True)
def trace_fit_grid(rots, fx, fy, cx, cy, ctrl_out, bound_out):
    """Trace each pixel through ``rots`` and fit its cubic Bezier in one pass.

    ``ctrl_out`` is ``(H, W, 4, 2)``, ``bound_out`` ``(H, W)`` receives the max
    node residual at the chord parameters. Returns the number of pixels whose
    ray ended up behind the camera.
    """
    h, w = bound_out.shape
    m = rots.shape[0]
    k = m + 1
    nodes = np.empty((k, 2))
    t = np.empty(k)
    behind = 0
    # identity steps copy the node exactly, as rotation_map does
    ident = np.empty(m, dtype=np.bool_)
    for j in range(m):
        ident[j] = True
        for a in range(3):
            for b in range(3):
                if rots[j, a, b] != (1.0 if a == b else 0.0):
                    ident[j] = False
    for py in range(h):
        for px in range(w):
            nodes[0, 0] = px
            nodes[0, 1] = py
            bad_ray = False
            for j in range(m):
                if ident[j]:
                    nodes[j + 1, 0] = nodes[j, 0]
                    nodes[j + 1, 1] = nodes[j, 1]
                    continue
                r = rots[j]
                x = (nodes[j, 0] - cx) / fx
                y = (nodes[j, 1] - cy) / fy
                xr = r[0, 0] * x + r[1, 0] * y + r[2, 0]
                yr = r[0, 1] * x + r[1, 1] * y + r[2, 1]
                zr = r[0, 2] * x + r[1, 2] * y + r[2, 2]
                if zr <= 0:
                    bad_ray = True
                    zr = 1.0
                nodes[j + 1, 0] = cx + fx * xr / zr
                nodes[j + 1, 1] = cy + fy * yr / zr
            if bad_ray:
                behind += 1

            t[0] = 0.0
            for j in range(m):
                t[j + 1] = t[j] + math.hypot(nodes[j + 1, 0] - nodes[j, 0], nodes[j + 1, 1] - nodes[j, 1])
            total = t[m]
            for j in range(k):
                if total > 0:
                    t[j] = t[j] / total
                else:
                    t[j] = j / (k - 1)
            t[m] = 1.0

            p0u, p0v = nodes[0, 0], nodes[0, 1]
            p3u, p3v = nodes[m, 0], nodes[m, 1]
            a11 = 0.0
            a12 = 0.0
            a22 = 0.0
            r1u = 0.0
            r1v = 0.0
            r2u = 0.0
            r2v = 0.0
            for j in range(k):
                tj = t[j]
                s = 1.0 - tj
                b1 = 3.0 * s * s * tj
                b2 = 3.0 * s * tj * tj
                ru = nodes[j, 0] - (p0u + tj * (p3u - p0u))
                rv = nodes[j, 1] - (p0v + tj * (p3v - p0v))
                a11 += b1 * b1
                a12 += b1 * b2
                a22 += b2 * b2
                r1u += b1 * ru
                r1v += b1 * rv
                r2u += b2 * ru
                r2v += b2 * rv
            det = a11 * a22 - a12 * a12
            scale = max(a11 * a22, 1e-300)
            if det > 1e-10 * scale:
                c1u = (a22 * r1u - a12 * r2u) / det
                c1v = (a22 * r1v - a12 * r2v) / det
                c2u = (a11 * r2u - a12 * r1u) / det
                c2v = (a11 * r2v - a12 * r1v) / det
            else:
                tr = a11 + a22
                if tr > 0:
                    q = tr * tr
                    c1u = (a11 * r1u + a12 * r2u) / q
                    c1v = (a11 * r1v + a12 * r2v) / q
                    c2u = (a12 * r1u + a22 * r2u) / q
                    c2v = (a12 * r1v + a22 * r2v) / q
                else:
                    c1u = 0.0
                    c1v = 0.0
                    c2u = 0.0
                    c2v = 0.0
            su = p3u - p0u
            sv = p3v - p0v
            p1u = p0u + su / 3.0 + c1u
            p1v = p0v + sv / 3.0 + c1v
            p2u = p0u + 2.0 * su / 3.0 + c2u
            p2v = p0v + 2.0 * sv / 3.0 + c2v
            ctrl_out[py, px, 0, 0] = p0u
            ctrl_out[py, px, 0, 1] = p0v
            ctrl_out[py, px, 1, 0] = p1u
            ctrl_out[py, px, 1, 1] = p1v
            ctrl_out[py, px, 2, 0] = p2u
            ctrl_out[py, px, 2, 1] = p2v
            ctrl_out[py, px, 3, 0] = p3u
            ctrl_out[py, px, 3, 1] = p3v

            worst = 0.0
            for j in range(k):
                tj = t[j]
                s = 1.0 - tj
                w0 = s * s * s
                w1 = 3.0 * s * s * tj
                w2 = 3.0 * s * tj * tj
                w3 = tj * tj * tj
                eu = w0 * p0u + w1 * p1u + w2 * p2u + w3 * p3u - nodes[j, 0]
                ev = w0 * p0v + w1 * p1v + w2 * p2v + w3 * p3v - nodes[j, 1]
                d = math.hypot(eu, ev)
                if d > worst:
                    worst = d
            bound_out[py, px] = worst
    return behind
