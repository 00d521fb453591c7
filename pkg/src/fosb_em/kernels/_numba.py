"""Compiled Galerkin assembly of the electric and magnetic field operators.

Both kernels are symmetric on a single mesh, so only pairs ``ty >= tx`` are
visited and every contribution is written to both triangle orders.
"""
from __future__ import annotations

import math

import numpy as np

from .._accel import njit

FOUR_PI = 4.0 * math.pi


@njit(cache=True)
def _shared(tris, tx, ty, sx, sy):
    """Number of shared vertices; fills their local positions in ``sx, sy``."""
    n = 0
    for i in range(3):
        for j in range(3):
            if tris[tx, i] == tris[ty, j]:
                sx[n] = i
                sy[n] = j
                n += 1
    return n


@njit(cache=True)
def _map(P, o0, o1, o2, u, v, out):
    for d in range(3):
        out[d] = P[o0, d] + u * (P[o1, d] - P[o0, d]) + v * (P[o2, d] - P[o1, d])


@njit(cache=True)
def _singular_pair(Px, Py, ox, oy, rule_pts, rule_w, jac, ks, do_T, do_K, locT, locK, Sg):
    """Accumulate 3x3 local integrals for a touching pair with a Sauter-Schwab rule.

    ``locT[k, i, j]`` collects int int (x - P_i).(y - Q_j) G, ``Sg[k]`` int int G,
    ``locK[k, i, j]`` int int g (x - y).((y - Q_j) x (x - P_i)).
    """
    nk = ks.shape[0]
    x = np.empty(3)
    y = np.empty(3)
    a = np.empty((3, 3))
    b = np.empty((3, 3))
    dxb = np.empty((3, 3))
    for p in range(rule_pts.shape[0]):
        _map(Px, ox[0], ox[1], ox[2], rule_pts[p, 0], rule_pts[p, 1], x)
        _map(Py, oy[0], oy[1], oy[2], rule_pts[p, 2], rule_pts[p, 3], y)
        d0 = x[0] - y[0]
        d1 = x[1] - y[1]
        d2 = x[2] - y[2]
        R = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        w = rule_w[p] * jac
        for i in range(3):
            for c in range(3):
                a[i, c] = x[c] - Px[i, c]
                b[i, c] = y[c] - Py[i, c]
        if do_K:
            for j in range(3):
                dxb[j, 0] = d1 * b[j, 2] - d2 * b[j, 1]
                dxb[j, 1] = d2 * b[j, 0] - d0 * b[j, 2]
                dxb[j, 2] = d0 * b[j, 1] - d1 * b[j, 0]
        for kk in range(nk):
            k = ks[kk]
            G = complex(math.cos(k * R), math.sin(k * R)) / (FOUR_PI * R)
            wG = w * G
            if do_T:
                Sg[kk] += wG
                for i in range(3):
                    for j in range(3):
                        locT[kk, i, j] += wG * (a[i, 0] * b[j, 0] + a[i, 1] * b[j, 1] + a[i, 2] * b[j, 2])
            if do_K:
                wg = wG * complex(-1.0 / R, k) / R
                for i in range(3):
                    for j in range(3):
                        # (x-y).(b_j x a_i) = a_i.(d x b_j)
                        locK[kk, i, j] += wg * (a[i, 0] * dxb[j, 0] + a[i, 1] * dxb[j, 1] + a[i, 2] * dxb[j, 2])


@njit(cache=True)
def _regular_pair(Px, Py, cx, cy, xq, wx, yq, wy, ks, do_T, do_K, locT, locK, Sg):
    """Tensor quadrature with moments about the triangle centroids."""
    nk = ks.shape[0]
    S0 = np.zeros(nk, dtype=np.complex128)
    Sx = np.zeros((nk, 3), dtype=np.complex128)
    Sy = np.zeros((nk, 3), dtype=np.complex128)
    Sxy = np.zeros(nk, dtype=np.complex128)
    A0 = np.zeros(nk, dtype=np.complex128)
    Ax = np.zeros((nk, 3), dtype=np.complex128)
    Ay = np.zeros((nk, 3), dtype=np.complex128)
    W = np.zeros((nk, 3), dtype=np.complex128)
    for p in range(xq.shape[0]):
        x0 = xq[p, 0] - cx[0]
        x1 = xq[p, 1] - cx[1]
        x2 = xq[p, 2] - cx[2]
        for q in range(yq.shape[0]):
            y0 = yq[q, 0] - cy[0]
            y1 = yq[q, 1] - cy[1]
            y2 = yq[q, 2] - cy[2]
            d0 = xq[p, 0] - yq[q, 0]
            d1 = xq[p, 1] - yq[q, 1]
            d2 = xq[p, 2] - yq[q, 2]
            R = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            w = wx[p] * wy[q]
            xy = x0 * y0 + x1 * y1 + x2 * y2
            c0 = y1 * x2 - y2 * x1
            c1 = y2 * x0 - y0 * x2
            c2 = y0 * x1 - y1 * x0
            for kk in range(nk):
                k = ks[kk]
                wG = w * complex(math.cos(k * R), math.sin(k * R)) / (FOUR_PI * R)
                if do_T:
                    S0[kk] += wG
                    Sx[kk, 0] += wG * x0
                    Sx[kk, 1] += wG * x1
                    Sx[kk, 2] += wG * x2
                    Sy[kk, 0] += wG * y0
                    Sy[kk, 1] += wG * y1
                    Sy[kk, 2] += wG * y2
                    Sxy[kk] += wG * xy
                if do_K:
                    wg = wG * complex(-1.0 / R, k) / R
                    A0[kk] += wg
                    Ax[kk, 0] += wg * x0
                    Ax[kk, 1] += wg * x1
                    Ax[kk, 2] += wg * x2
                    Ay[kk, 0] += wg * y0
                    Ay[kk, 1] += wg * y1
                    Ay[kk, 2] += wg * y2
                    W[kk, 0] += wg * c0
                    W[kk, 1] += wg * c1
                    W[kk, 2] += wg * c2
    Pp = np.empty(3)
    Qp = np.empty(3)
    for i in range(3):
        for j in range(3):
            for c in range(3):
                Pp[c] = Px[i, c] - cx[c]
                Qp[c] = Py[j, c] - cy[c]
            pq = Pp[0] * Qp[0] + Pp[1] * Qp[1] + Pp[2] * Qp[2]
            QxP0 = Qp[1] * Pp[2] - Qp[2] * Pp[1]
            QxP1 = Qp[2] * Pp[0] - Qp[0] * Pp[2]
            QxP2 = Qp[0] * Pp[1] - Qp[1] * Pp[0]
            D0 = Px[i, 0] - Py[j, 0]
            D1 = Px[i, 1] - Py[j, 1]
            D2 = Px[i, 2] - Py[j, 2]
            for kk in range(nk):
                if do_T:
                    locT[kk, i, j] += (
                        Sxy[kk]
                        - (Pp[0] * Sy[kk, 0] + Pp[1] * Sy[kk, 1] + Pp[2] * Sy[kk, 2])
                        - (Qp[0] * Sx[kk, 0] + Qp[1] * Sx[kk, 1] + Qp[2] * Sx[kk, 2])
                        + pq * S0[kk]
                    )
                if do_K:
                    # W - Ay x P' - Q' x Ax + (Q' x P') A0
                    v0 = W[kk, 0] - (Ay[kk, 1] * Pp[2] - Ay[kk, 2] * Pp[1]) - (Qp[1] * Ax[kk, 2] - Qp[2] * Ax[kk, 1]) + QxP0 * A0[kk]
                    v1 = W[kk, 1] - (Ay[kk, 2] * Pp[0] - Ay[kk, 0] * Pp[2]) - (Qp[2] * Ax[kk, 0] - Qp[0] * Ax[kk, 2]) + QxP1 * A0[kk]
                    v2 = W[kk, 2] - (Ay[kk, 0] * Pp[1] - Ay[kk, 1] * Pp[0]) - (Qp[0] * Ax[kk, 1] - Qp[1] * Ax[kk, 0]) + QxP2 * A0[kk]
                    locK[kk, i, j] += D0 * v0 + D1 * v1 + D2 * v2
    if do_T:
        for kk in range(nk):
            Sg[kk] += S0[kk]


@njit(cache=True)
def assemble(
    corners, tris, areas, centroids, diam, coef, tri_dof, N, ks,
    pts_far, w_far, pts_near, w_near, sep,
    c_pts, c_w, e_pts, e_w, v_pts, v_w, do_T, do_K,
):
    nt = tris.shape[0]
    nk = ks.shape[0]
    T = np.zeros((nk, N, N), dtype=np.complex128)
    K = np.zeros((nk, N, N), dtype=np.complex128)
    locT = np.zeros((nk, 3, 3), dtype=np.complex128)
    locK = np.zeros((nk, 3, 3), dtype=np.complex128)
    Sg = np.zeros(nk, dtype=np.complex128)
    sx = np.zeros(3, dtype=np.int64)
    sy = np.zeros(3, dtype=np.int64)
    ox = np.zeros(3, dtype=np.int64)
    oy = np.zeros(3, dtype=np.int64)
    for tx in range(nt):
        Px = corners[tx]
        for ty in range(tx, nt):
            Py = corners[ty]
            locT[:] = 0.0
            locK[:] = 0.0
            Sg[:] = 0.0
            ns = _shared(tris, tx, ty, sx, sy)
            jac = 4.0 * areas[tx] * areas[ty]
            if ns == 3:
                for i in range(3):
                    ox[i] = i
                    oy[i] = i
                _singular_pair(Px, Py, ox, oy, c_pts, c_w, jac, ks, do_T, False, locT, locK, Sg)
            elif ns == 2:
                ox[0] = sx[0]
                ox[1] = sx[1]
                ox[2] = 3 - sx[0] - sx[1]
                oy[0] = sy[0]
                oy[1] = sy[1]
                oy[2] = 3 - sy[0] - sy[1]
                _singular_pair(Px, Py, ox, oy, e_pts, e_w, jac, ks, do_T, do_K, locT, locK, Sg)
            elif ns == 1:
                ox[0] = sx[0]
                ox[1] = (sx[0] + 1) % 3
                ox[2] = (sx[0] + 2) % 3
                oy[0] = sy[0]
                oy[1] = (sy[0] + 1) % 3
                oy[2] = (sy[0] + 2) % 3
                _singular_pair(Px, Py, ox, oy, v_pts, v_w, jac, ks, do_T, do_K, locT, locK, Sg)
            else:
                dist = math.sqrt(
                    (centroids[tx, 0] - centroids[ty, 0]) ** 2
                    + (centroids[tx, 1] - centroids[ty, 1]) ** 2
                    + (centroids[tx, 2] - centroids[ty, 2]) ** 2
                )
                if dist > sep * max(diam[tx], diam[ty]):
                    _regular_pair(Px, Py, centroids[tx], centroids[ty], pts_far[tx], w_far[tx],
                                  pts_far[ty], w_far[ty], ks, do_T, do_K, locT, locK, Sg)
                else:
                    _regular_pair(Px, Py, centroids[tx], centroids[ty], pts_near[tx], w_near[tx],
                                  pts_near[ty], w_near[ty], ks, do_T, do_K, locT, locK, Sg)
            for kk in range(nk):
                k = ks[kk]
                ik = complex(0.0, k)
                for i in range(3):
                    m = tri_dof[tx, i]
                    for j in range(3):
                        n = tri_dof[ty, j]
                        cc = coef[tx, i] * coef[ty, j]
                        if do_T:
                            v = -cc * (ik * locT[kk, i, j] + 4.0 * Sg[kk] / ik)
                            T[kk, m, n] += v
                            if ty != tx:
                                T[kk, n, m] += v
                        if do_K:
                            v = -cc * locK[kk, i, j]
                            K[kk, m, n] += v
                            if ty != tx:
                                K[kk, n, m] += v
    return T, K
