"""Vectorised numpy assembly, numerically equivalent to the numba kernels.

Regular pairs are processed one test triangle at a time against all trial
triangles; touching pairs are batched per adjacency type.
"""
from __future__ import annotations

import numpy as np

FOUR_PI = 4.0 * np.pi
_CHUNK = 256


def _touching_pairs(tris: np.ndarray):
    """Ordered pairs sharing at least one vertex, with shared local positions."""
    nt = tris.shape[0]
    nv = tris.max() + 1
    owners = [[] for _ in range(nv)]
    for t in range(nt):
        for v in tris[t]:
            owners[v].append(t)
    pairs = {}
    for lst in owners:
        for a in lst:
            for b in lst:
                pairs[(a, b)] = None
    out = {1: [], 2: [], 3: []}
    for a, b in pairs:
        if a > b:
            continue
        sx, sy = [], []
        for i in range(3):
            for j in range(3):
                if tris[a, i] == tris[b, j]:
                    sx.append(i)
                    sy.append(j)
        n = len(sx)
        if n == 3:
            ox, oy = [0, 1, 2], [0, 1, 2]
        elif n == 2:
            ox = [sx[0], sx[1], 3 - sx[0] - sx[1]]
            oy = [sy[0], sy[1], 3 - sy[0] - sy[1]]
        else:
            ox = [sx[0], (sx[0] + 1) % 3, (sx[0] + 2) % 3]
            oy = [sy[0], (sy[0] + 1) % 3, (sy[0] + 2) % 3]
        out[n].append((a, b, *ox, *oy))
    return {n: np.array(v, dtype=np.int64).reshape(-1, 8) for n, v in out.items()}


def _kernels(R, k):
    G = np.exp(1j * k * R) / (FOUR_PI * R)
    g = G * (1j * k - 1.0 / R) / R
    return G, g


def _singular(corners, areas, pairs, rule_pts, rule_w, ks, do_T, do_K):
    """Local 3x3 integrals for a batch of touching pairs."""
    tx, ty = pairs[:, 0], pairs[:, 1]
    ox, oy = pairs[:, 2:5], pairs[:, 5:8]
    rows = np.arange(len(pairs))[:, None]
    Px = corners[tx]
    Py = corners[ty]
    X = Px[rows, ox]  # reordered corners (np, 3, 3)
    Y = Py[rows, oy]
    u = rule_pts
    x = X[:, None, 0] + u[None, :, 0, None] * (X[:, None, 1] - X[:, None, 0]) + u[None, :, 1, None] * (X[:, None, 2] - X[:, None, 1])
    y = Y[:, None, 0] + u[None, :, 2, None] * (Y[:, None, 1] - Y[:, None, 0]) + u[None, :, 3, None] * (Y[:, None, 2] - Y[:, None, 1])
    d = x - y
    R = np.linalg.norm(d, axis=-1)
    w = rule_w[None, :] * (4.0 * areas[tx] * areas[ty])[:, None]
    a = x[:, :, None, :] - Px[:, None, :, :]  # (np, nq, 3, 3)
    b = y[:, :, None, :] - Py[:, None, :, :]
    nk = len(ks)
    locT = np.zeros((nk, len(pairs), 3, 3), complex)
    locK = np.zeros((nk, len(pairs), 3, 3), complex)
    Sg = np.zeros((nk, len(pairs)), complex)
    ab = np.einsum("pqid,pqjd->pqij", a, b) if do_T else None
    adb = np.einsum("pqid,pqjd->pqij", a, np.cross(d[:, :, None, :], b)) if do_K else None
    for kk, k in enumerate(ks):
        G, g = _kernels(R, k)
        if do_T:
            wG = w * G
            Sg[kk] = wG.sum(axis=1)
            locT[kk] = np.einsum("pq,pqij->pij", wG, ab)
        if do_K:
            locK[kk] = np.einsum("pq,pqij->pij", w * g, adb)
    return locT, locK, Sg


def _regular(corners, centroids, tx, tys, xq, wx, yq, wy, ks, do_T, do_K):
    """Moment form of the tensor quadrature for one test triangle."""
    xr = xq - centroids[tx]  # (nqx, 3)
    yr = yq - centroids[tys][:, None, :]  # (n, nqy, 3)
    d = xq[None, :, None, :] - yq[:, None, :, :]  # (n, nqx, nqy, 3)
    R = np.linalg.norm(d, axis=-1)
    w = wx[None, :, None] * wy[:, None, :]
    Pp = corners[tx][None] - centroids[tx]  # (1, 3, 3)
    Qp = corners[tys] - centroids[tys][:, None, :]  # (n, 3, 3)
    D = corners[tx][None, :, None, :] - corners[tys][:, None, :, :]  # (n, 3, 3, 3)
    nk = len(ks)
    n = len(tys)
    locT = np.zeros((nk, n, 3, 3), complex)
    locK = np.zeros((nk, n, 3, 3), complex)
    Sg = np.zeros((nk, n), complex)
    xy = np.einsum("pd,nqd->npq", xr, yr)
    yx = np.cross(yr[:, None, :, :], xr[None, :, None, :])  # y' x x'
    for kk, k in enumerate(ks):
        G, g = _kernels(R, k)
        if do_T:
            wG = w * G
            S0 = wG.sum(axis=(1, 2))
            Sx = np.einsum("npq,pd->nd", wG, xr)
            Sy = np.einsum("npq,nqd->nd", wG, yr)
            Sxy = np.einsum("npq,npq->n", wG, xy)
            locT[kk] = (
                Sxy[:, None, None]
                - np.einsum("id,nd->ni", Pp[0], Sy)[:, :, None]
                - np.einsum("njd,nd->nj", Qp, Sx)[:, None, :]
                + np.einsum("id,njd->nij", Pp[0], Qp) * S0[:, None, None]
            )
            Sg[kk] = S0
        if do_K:
            wg = w * g
            A0 = wg.sum(axis=(1, 2))
            Ax = np.einsum("npq,pd->nd", wg, xr)
            Ay = np.einsum("npq,nqd->nd", wg, yr)
            W = np.einsum("npq,npqd->nd", wg, yx)
            V = (
                W[:, None, None, :]
                - np.cross(Ay[:, None, None, :], Pp[0][None, :, None, :])
                - np.cross(Qp[:, None, :, :], Ax[:, None, None, :])
                + np.cross(Qp[:, None, :, :], Pp[0][None, :, None, :]) * A0[:, None, None, None]
            )
            locK[kk] = np.einsum("nijd,nijd->nij", D, V)
    return locT, locK, Sg


def _scatter(T, K, tri_dof, coef, tx, ty, locT, locK, Sg, ks, do_T, do_K):
    """Add local blocks for pairs ``tx <= ty`` and their mirror images."""
    rows = tri_dof[tx][:, :, None]
    cols = tri_dof[ty][:, None, :]
    cc = coef[tx][:, :, None] * coef[ty][:, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    off = (tx != ty)[:, None, None] & np.ones((1, 3, 3), bool)
    r = np.concatenate([rows.ravel(), cols[off]])
    c = np.concatenate([cols.ravel(), rows[off]])
    for kk, k in enumerate(ks):
        ik = 1j * k
        if do_T:
            v = -cc * (ik * locT[kk] + 4.0 * Sg[kk][:, None, None] / ik)
            np.add.at(T[kk], (r, c), np.concatenate([v.ravel(), v[off]]))
        if do_K:
            v = -cc * locK[kk]
            np.add.at(K[kk], (r, c), np.concatenate([v.ravel(), v[off]]))


def assemble(
    corners, tris, areas, centroids, diam, coef, tri_dof, N, ks,
    pts_far, w_far, pts_near, w_near, sep,
    c_pts, c_w, e_pts, e_w, v_pts, v_w, do_T, do_K,
):
    nt = tris.shape[0]
    nk = len(ks)
    T = np.zeros((nk, N, N), complex)
    K = np.zeros((nk, N, N), complex)
    touching = _touching_pairs(tris)
    touch_mask = np.zeros((nt, nt), bool)
    for arr in touching.values():
        touch_mask[arr[:, 0], arr[:, 1]] = True
    dist = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=-1)
    dmax = np.maximum(diam[:, None], diam[None, :])
    far = dist > sep * dmax
    for tx in range(nt):
        for sel, pts, wts in ((far[tx], pts_far, w_far), (~far[tx], pts_near, w_near)):
            tys = np.flatnonzero(sel & ~touch_mask[tx])
            tys = tys[tys > tx]
            for s in range(0, len(tys), _CHUNK):
                blk = tys[s : s + _CHUNK]
                locT, locK, Sg = _regular(corners, centroids, tx, blk, pts[tx], wts[tx], pts[blk], wts[blk], ks, do_T, do_K)
                _scatter(T, K, tri_dof, coef, np.full(len(blk), tx), blk, locT, locK, Sg, ks, do_T, do_K)
    for n, (rp, rw) in ((3, (c_pts, c_w)), (2, (e_pts, e_w)), (1, (v_pts, v_w))):
        arr = touching[n]
        step = max(1, 200000 // len(rw))
        for s in range(0, len(arr), step):
            blk = arr[s : s + step]
            locT, locK, Sg = _singular(corners, areas, blk, rp, rw, ks, do_T, do_K and n != 3)
            _scatter(T, K, tri_dof, coef, blk[:, 0], blk[:, 1], locT, locK, Sg, ks, do_T, do_K)
    return T, K
